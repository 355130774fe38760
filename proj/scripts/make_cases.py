#!/usr/bin/env python3
"""Generate the JSON case fixtures under cases/.

Bus/gen/branch tables are standard test systems in MATPOWER table layout
(bus: id type Pd Qd Gs Bs | gen: bus Pg Vg | branch: f t r x b ratio shift_deg).
synth300 is a reproducible synthetic 300-bus system with the same bus/branch
counts as the IEEE 300-bus case, used only for scaling experiments.

Each generated case is validated here with a small numpy Newton-Raphson
power flow before being written.
"""

import json
import math
import os
import sys

import numpy as np

BASE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "cases")

# ---------------------------------------------------------------------------
# IEEE 14-bus
# ---------------------------------------------------------------------------

IEEE14_BUS = [
    # id type Pd    Qd    Gs Bs
    (1, 3, 0.0, 0.0, 0, 0),
    (2, 2, 21.7, 12.7, 0, 0),
    (3, 2, 94.2, 19.0, 0, 0),
    (4, 1, 47.8, -3.9, 0, 0),
    (5, 1, 7.6, 1.6, 0, 0),
    (6, 2, 11.2, 7.5, 0, 0),
    (7, 1, 0.0, 0.0, 0, 0),
    (8, 2, 0.0, 0.0, 0, 0),
    (9, 1, 29.5, 16.6, 0, 19.0),
    (10, 1, 9.0, 5.8, 0, 0),
    (11, 1, 3.5, 1.8, 0, 0),
    (12, 1, 6.1, 1.6, 0, 0),
    (13, 1, 13.5, 5.8, 0, 0),
    (14, 1, 14.9, 5.0, 0, 0),
]

IEEE14_GEN = [
    (1, 232.4, 1.060),
    (2, 40.0, 1.045),
    (3, 0.0, 1.010),
    (6, 0.0, 1.070),
    (8, 0.0, 1.090),
]

IEEE14_BRANCH = [
    (1, 2, 0.01938, 0.05917, 0.0528, 0, 0),
    (1, 5, 0.05403, 0.22304, 0.0492, 0, 0),
    (2, 3, 0.04699, 0.19797, 0.0438, 0, 0),
    (2, 4, 0.05811, 0.17632, 0.0340, 0, 0),
    (2, 5, 0.05695, 0.17388, 0.0346, 0, 0),
    (3, 4, 0.06701, 0.17103, 0.0128, 0, 0),
    (4, 5, 0.01335, 0.04211, 0.0, 0, 0),
    (4, 7, 0.0, 0.20912, 0.0, 0.978, 0),
    (4, 9, 0.0, 0.55618, 0.0, 0.969, 0),
    (5, 6, 0.0, 0.25202, 0.0, 0.932, 0),
    (6, 11, 0.09498, 0.19890, 0.0, 0, 0),
    (6, 12, 0.12291, 0.25581, 0.0, 0, 0),
    (6, 13, 0.06615, 0.13027, 0.0, 0, 0),
    (7, 8, 0.0, 0.17615, 0.0, 0, 0),
    (7, 9, 0.0, 0.11001, 0.0, 0, 0),
    (9, 10, 0.03181, 0.08450, 0.0, 0, 0),
    (9, 14, 0.12711, 0.27038, 0.0, 0, 0),
    (10, 11, 0.08205, 0.19207, 0.0, 0, 0),
    (12, 13, 0.22092, 0.19988, 0.0, 0, 0),
    (13, 14, 0.17093, 0.34802, 0.0, 0, 0),
]

# ---------------------------------------------------------------------------
# IEEE 30-bus
# ---------------------------------------------------------------------------

IEEE30_BUS = [
    (1, 3, 0.0, 0.0, 0, 0),
    (2, 2, 21.7, 12.7, 0, 0),
    (3, 1, 2.4, 1.2, 0, 0),
    (4, 1, 7.6, 1.6, 0, 0),
    (5, 1, 0.0, 0.0, 0, 0.19 * 100),
    (6, 1, 0.0, 0.0, 0, 0),
    (7, 1, 22.8, 10.9, 0, 0),
    (8, 1, 30.0, 30.0, 0, 0),
    (9, 1, 0.0, 0.0, 0, 0),
    (10, 1, 5.8, 2.0, 0, 0),
    (11, 1, 0.0, 0.0, 0, 0),
    (12, 1, 11.2, 7.5, 0, 0),
    (13, 2, 0.0, 0.0, 0, 0),
    (14, 1, 6.2, 1.6, 0, 0),
    (15, 1, 8.2, 2.5, 0, 0),
    (16, 1, 3.5, 1.8, 0, 0),
    (17, 1, 9.0, 5.8, 0, 0),
    (18, 1, 3.2, 0.9, 0, 0),
    (19, 1, 9.5, 3.4, 0, 0),
    (20, 1, 2.2, 0.7, 0, 0),
    (21, 1, 17.5, 11.2, 0, 0),
    (22, 2, 0.0, 0.0, 0, 0),
    (23, 2, 3.2, 1.6, 0, 0),
    (24, 1, 8.7, 6.7, 0, 0.04 * 100),
    (25, 1, 0.0, 0.0, 0, 0),
    (26, 1, 3.5, 2.3, 0, 0),
    (27, 2, 0.0, 0.0, 0, 0),
    (28, 1, 0.0, 0.0, 0, 0),
    (29, 1, 2.4, 0.9, 0, 0),
    (30, 1, 10.6, 1.9, 0, 0),
]

IEEE30_GEN = [
    (1, 23.54, 1.0),
    (2, 60.97, 1.0),
    (22, 21.59, 1.0),
    (27, 26.91, 1.0),
    (23, 19.20, 1.0),
    (13, 37.00, 1.0),
]

IEEE30_BRANCH = [
    (1, 2, 0.02, 0.06, 0.03, 0, 0),
    (1, 3, 0.05, 0.19, 0.02, 0, 0),
    (2, 4, 0.06, 0.17, 0.02, 0, 0),
    (3, 4, 0.01, 0.04, 0.0, 0, 0),
    (2, 5, 0.05, 0.20, 0.02, 0, 0),
    (2, 6, 0.06, 0.18, 0.02, 0, 0),
    (4, 6, 0.01, 0.04, 0.0, 0, 0),
    (5, 7, 0.05, 0.12, 0.01, 0, 0),
    (6, 7, 0.03, 0.08, 0.01, 0, 0),
    (6, 8, 0.01, 0.04, 0.0, 0, 0),
    (6, 9, 0.0, 0.21, 0.0, 0, 0),
    (6, 10, 0.0, 0.56, 0.0, 0, 0),
    (9, 11, 0.0, 0.21, 0.0, 0, 0),
    (9, 10, 0.0, 0.11, 0.0, 0, 0),
    (4, 12, 0.0, 0.26, 0.0, 0, 0),
    (12, 13, 0.0, 0.14, 0.0, 0, 0),
    (12, 14, 0.12, 0.26, 0.0, 0, 0),
    (12, 15, 0.07, 0.13, 0.0, 0, 0),
    (12, 16, 0.09, 0.20, 0.0, 0, 0),
    (14, 15, 0.22, 0.20, 0.0, 0, 0),
    (16, 17, 0.08, 0.19, 0.0, 0, 0),
    (15, 18, 0.11, 0.22, 0.0, 0, 0),
    (18, 19, 0.06, 0.13, 0.0, 0, 0),
    (19, 20, 0.03, 0.07, 0.0, 0, 0),
    (10, 20, 0.09, 0.21, 0.0, 0, 0),
    (10, 17, 0.03, 0.08, 0.0, 0, 0),
    (10, 21, 0.03, 0.07, 0.0, 0, 0),
    (10, 22, 0.07, 0.15, 0.0, 0, 0),
    (21, 22, 0.01, 0.02, 0.0, 0, 0),
    (15, 23, 0.10, 0.20, 0.0, 0, 0),
    (22, 24, 0.12, 0.18, 0.0, 0, 0),
    (23, 24, 0.13, 0.27, 0.0, 0, 0),
    (24, 25, 0.19, 0.33, 0.0, 0, 0),
    (25, 26, 0.25, 0.38, 0.0, 0, 0),
    (25, 27, 0.11, 0.21, 0.0, 0, 0),
    (28, 27, 0.0, 0.40, 0.0, 0, 0),
    (27, 29, 0.22, 0.42, 0.0, 0, 0),
    (27, 30, 0.32, 0.60, 0.0, 0, 0),
    (29, 30, 0.24, 0.45, 0.0, 0, 0),
    (8, 28, 0.06, 0.20, 0.02, 0, 0),
    (6, 28, 0.02, 0.06, 0.01, 0, 0),
]

# ---------------------------------------------------------------------------
# IEEE 118-bus
# ---------------------------------------------------------------------------

IEEE118_BUS = [
    (1, 2, 51, 27, 0, 0), (2, 1, 20, 9, 0, 0), (3, 1, 39, 10, 0, 0),
    (4, 2, 39, 12, 0, 0), (5, 1, 0, 0, 0, -40), (6, 2, 52, 22, 0, 0),
    (7, 1, 19, 2, 0, 0), (8, 2, 28, 0, 0, 0), (9, 1, 0, 0, 0, 0),
    (10, 2, 0, 0, 0, 0), (11, 1, 70, 23, 0, 0), (12, 2, 47, 10, 0, 0),
    (13, 1, 34, 16, 0, 0), (14, 1, 14, 1, 0, 0), (15, 2, 90, 30, 0, 0),
    (16, 1, 25, 10, 0, 0), (17, 1, 11, 3, 0, 0), (18, 2, 60, 34, 0, 0),
    (19, 2, 45, 25, 0, 0), (20, 1, 18, 3, 0, 0), (21, 1, 14, 8, 0, 0),
    (22, 1, 10, 5, 0, 0), (23, 1, 7, 3, 0, 0), (24, 2, 13, 0, 0, 0),
    (25, 2, 0, 0, 0, 0), (26, 2, 0, 0, 0, 0), (27, 2, 71, 13, 0, 0),
    (28, 1, 17, 7, 0, 0), (29, 1, 24, 4, 0, 0), (30, 1, 0, 0, 0, 0),
    (31, 2, 43, 27, 0, 0), (32, 2, 59, 23, 0, 0), (33, 1, 23, 9, 0, 0),
    (34, 2, 59, 26, 0, 14), (35, 1, 33, 9, 0, 0), (36, 2, 31, 17, 0, 0),
    (37, 1, 0, 0, 0, -25), (38, 1, 0, 0, 0, 0), (39, 1, 27, 11, 0, 0),
    (40, 2, 66, 23, 0, 0), (41, 1, 37, 10, 0, 0), (42, 2, 96, 23, 0, 0),
    (43, 1, 18, 7, 0, 0), (44, 1, 16, 8, 0, 10), (45, 1, 53, 22, 0, 10),
    (46, 2, 28, 10, 0, 10), (47, 1, 34, 0, 0, 0), (48, 1, 20, 11, 0, 15),
    (49, 2, 87, 30, 0, 0), (50, 1, 17, 4, 0, 0), (51, 1, 17, 8, 0, 0),
    (52, 1, 18, 5, 0, 0), (53, 1, 23, 11, 0, 0), (54, 2, 113, 32, 0, 0),
    (55, 2, 63, 22, 0, 0), (56, 2, 84, 18, 0, 0), (57, 1, 12, 3, 0, 0),
    (58, 1, 12, 3, 0, 0), (59, 2, 277, 113, 0, 0), (60, 1, 78, 3, 0, 0),
    (61, 2, 0, 0, 0, 0), (62, 2, 77, 14, 0, 0), (63, 1, 0, 0, 0, 0),
    (64, 1, 0, 0, 0, 0), (65, 2, 0, 0, 0, 0), (66, 2, 39, 18, 0, 0),
    (67, 1, 28, 7, 0, 0), (68, 1, 0, 0, 0, 0), (69, 3, 0, 0, 0, 0),
    (70, 2, 66, 20, 0, 0), (71, 1, 0, 0, 0, 0), (72, 2, 12, 0, 0, 0),
    (73, 2, 6, 0, 0, 0), (74, 2, 68, 27, 0, 12), (75, 1, 47, 11, 0, 0),
    (76, 2, 68, 36, 0, 0), (77, 2, 61, 28, 0, 0), (78, 1, 71, 26, 0, 0),
    (79, 1, 39, 32, 0, 20), (80, 2, 130, 26, 0, 0), (81, 1, 0, 0, 0, 0),
    (82, 1, 54, 27, 0, 20), (83, 1, 20, 10, 0, 10), (84, 1, 11, 7, 0, 0),
    (85, 2, 24, 15, 0, 0), (86, 1, 21, 10, 0, 0), (87, 2, 0, 0, 0, 0),
    (88, 1, 48, 10, 0, 0), (89, 2, 0, 0, 0, 0), (90, 2, 163, 42, 0, 0),
    (91, 2, 10, 0, 0, 0), (92, 2, 65, 10, 0, 0), (93, 1, 12, 7, 0, 0),
    (94, 1, 30, 16, 0, 0), (95, 1, 42, 31, 0, 0), (96, 1, 38, 15, 0, 0),
    (97, 1, 15, 9, 0, 0), (98, 1, 34, 8, 0, 0), (99, 2, 42, 0, 0, 0),
    (100, 2, 37, 18, 0, 0), (101, 1, 22, 15, 0, 0), (102, 1, 5, 3, 0, 0),
    (103, 2, 23, 16, 0, 0), (104, 2, 38, 25, 0, 0), (105, 2, 31, 26, 0, 20),
    (106, 1, 43, 16, 0, 0), (107, 2, 50, 12, 0, 6), (108, 1, 2, 1, 0, 0),
    (109, 1, 8, 3, 0, 0), (110, 2, 39, 30, 0, 6), (111, 2, 0, 0, 0, 0),
    (112, 2, 68, 13, 0, 0), (113, 2, 6, 0, 0, 0), (114, 1, 8, 3, 0, 0),
    (115, 1, 22, 7, 0, 0), (116, 2, 184, 0, 0, 0), (117, 1, 20, 8, 0, 0),
    (118, 1, 33, 15, 0, 0),
]

IEEE118_GEN = [
    (1, 0, 0.955), (4, 0, 0.998), (6, 0, 0.990), (8, 0, 1.015),
    (10, 450, 1.050), (12, 85, 0.990), (15, 0, 0.970), (18, 0, 0.973),
    (19, 0, 0.962), (24, 0, 0.992), (25, 220, 1.050), (26, 314, 1.015),
    (27, 0, 0.968), (31, 7, 0.967), (32, 0, 0.963), (34, 0, 0.984),
    (36, 0, 0.980), (40, 0, 0.970), (42, 0, 0.985), (46, 19, 1.005),
    (49, 204, 1.025), (54, 48, 0.955), (55, 0, 0.952), (56, 0, 0.954),
    (59, 155, 0.985), (61, 160, 0.995), (62, 0, 0.998), (65, 391, 1.005),
    (66, 392, 1.050), (69, 516.4, 1.035), (70, 0, 0.984), (72, 0, 0.980),
    (73, 0, 0.991), (74, 0, 0.958), (76, 0, 0.943), (77, 0, 1.006),
    (80, 477, 1.040), (85, 0, 0.985), (87, 4, 1.015), (89, 607, 1.005),
    (90, 0, 0.985), (91, 0, 0.980), (92, 0, 0.990), (99, 0, 1.010),
    (100, 252, 1.017), (103, 40, 1.010), (104, 0, 0.971), (105, 0, 0.965),
    (107, 0, 0.952), (110, 0, 0.973), (111, 36, 0.980), (112, 0, 0.975),
    (113, 0, 0.993), (116, 0, 1.005),
]

IEEE118_BRANCH = [
    (1, 2, 0.0303, 0.0999, 0.0254, 0, 0),
    (1, 3, 0.0129, 0.0424, 0.01082, 0, 0),
    (4, 5, 0.00176, 0.00798, 0.0021, 0, 0),
    (3, 5, 0.0241, 0.108, 0.0284, 0, 0),
    (5, 6, 0.0119, 0.054, 0.01426, 0, 0),
    (6, 7, 0.00459, 0.0208, 0.0055, 0, 0),
    (8, 9, 0.00244, 0.0305, 1.162, 0, 0),
    (8, 5, 0.0, 0.0267, 0.0, 0.985, 0),
    (9, 10, 0.00258, 0.0322, 1.23, 0, 0),
    (4, 11, 0.0209, 0.0688, 0.01748, 0, 0),
    (5, 11, 0.0203, 0.0682, 0.01738, 0, 0),
    (11, 12, 0.00595, 0.0196, 0.00502, 0, 0),
    (2, 12, 0.0187, 0.0616, 0.01572, 0, 0),
    (3, 12, 0.0484, 0.16, 0.0406, 0, 0),
    (7, 12, 0.00862, 0.034, 0.00874, 0, 0),
    (11, 13, 0.02225, 0.0731, 0.01876, 0, 0),
    (12, 14, 0.0215, 0.0707, 0.01816, 0, 0),
    (13, 15, 0.0744, 0.2444, 0.06268, 0, 0),
    (14, 15, 0.0595, 0.195, 0.0502, 0, 0),
    (12, 16, 0.0212, 0.0834, 0.0214, 0, 0),
    (15, 17, 0.0132, 0.0437, 0.0444, 0, 0),
    (16, 17, 0.0454, 0.1801, 0.0466, 0, 0),
    (17, 18, 0.0123, 0.0505, 0.01298, 0, 0),
    (18, 19, 0.01119, 0.0493, 0.01142, 0, 0),
    (19, 20, 0.0252, 0.117, 0.0298, 0, 0),
    (15, 19, 0.012, 0.0394, 0.0101, 0, 0),
    (20, 21, 0.0183, 0.0849, 0.0216, 0, 0),
    (21, 22, 0.0209, 0.097, 0.0246, 0, 0),
    (22, 23, 0.0342, 0.159, 0.0404, 0, 0),
    (23, 24, 0.0135, 0.0492, 0.0498, 0, 0),
    (23, 25, 0.0156, 0.08, 0.0864, 0, 0),
    (26, 25, 0.0, 0.0382, 0.0, 0.96, 0),
    (25, 27, 0.0318, 0.163, 0.1764, 0, 0),
    (27, 28, 0.01913, 0.0855, 0.0216, 0, 0),
    (28, 29, 0.0237, 0.0943, 0.0238, 0, 0),
    (30, 17, 0.0, 0.0388, 0.0, 0.96, 0),
    (8, 30, 0.00431, 0.0504, 0.514, 0, 0),
    (26, 30, 0.00799, 0.086, 0.908, 0, 0),
    (17, 31, 0.0474, 0.1563, 0.0399, 0, 0),
    (29, 31, 0.0108, 0.0331, 0.0083, 0, 0),
    (23, 32, 0.0317, 0.1153, 0.1173, 0, 0),
    (31, 32, 0.0298, 0.0985, 0.0251, 0, 0),
    (27, 32, 0.0229, 0.0755, 0.01926, 0, 0),
    (15, 33, 0.038, 0.1244, 0.03194, 0, 0),
    (19, 34, 0.0752, 0.247, 0.0632, 0, 0),
    (35, 36, 0.00224, 0.0102, 0.00268, 0, 0),
    (35, 37, 0.011, 0.0497, 0.01318, 0, 0),
    (33, 37, 0.0415, 0.142, 0.0366, 0, 0),
    (34, 36, 0.00871, 0.0268, 0.00568, 0, 0),
    (34, 37, 0.00256, 0.0094, 0.00984, 0, 0),
    (38, 37, 0.0, 0.0375, 0.0, 0.935, 0),
    (37, 39, 0.0321, 0.106, 0.027, 0, 0),
    (37, 40, 0.0593, 0.168, 0.042, 0, 0),
    (30, 38, 0.00464, 0.054, 0.422, 0, 0),
    (39, 40, 0.0184, 0.0605, 0.01552, 0, 0),
    (40, 41, 0.0145, 0.0487, 0.01222, 0, 0),
    (40, 42, 0.0555, 0.183, 0.0466, 0, 0),
    (41, 42, 0.041, 0.135, 0.0344, 0, 0),
    (43, 44, 0.0608, 0.2454, 0.06068, 0, 0),
    (34, 43, 0.0413, 0.1681, 0.04226, 0, 0),
    (44, 45, 0.0224, 0.0901, 0.0224, 0, 0),
    (45, 46, 0.04, 0.1356, 0.0332, 0, 0),
    (46, 47, 0.038, 0.127, 0.0316, 0, 0),
    (46, 48, 0.0601, 0.189, 0.0472, 0, 0),
    (47, 49, 0.0191, 0.0625, 0.01604, 0, 0),
    (42, 49, 0.0715, 0.323, 0.086, 0, 0),
    (42, 49, 0.0715, 0.323, 0.086, 0, 0),
    (45, 49, 0.0684, 0.186, 0.0444, 0, 0),
    (48, 49, 0.0179, 0.0505, 0.01258, 0, 0),
    (49, 50, 0.0267, 0.0752, 0.01874, 0, 0),
    (49, 51, 0.0486, 0.137, 0.0342, 0, 0),
    (51, 52, 0.0203, 0.0588, 0.01396, 0, 0),
    (52, 53, 0.0405, 0.1635, 0.04058, 0, 0),
    (53, 54, 0.0263, 0.122, 0.031, 0, 0),
    (49, 54, 0.073, 0.289, 0.0738, 0, 0),
    (49, 54, 0.0869, 0.291, 0.073, 0, 0),
    (54, 55, 0.0169, 0.0707, 0.0202, 0, 0),
    (54, 56, 0.00275, 0.00955, 0.00732, 0, 0),
    (55, 56, 0.00488, 0.0151, 0.00374, 0, 0),
    (56, 57, 0.0343, 0.0966, 0.0242, 0, 0),
    (50, 57, 0.0474, 0.134, 0.0332, 0, 0),
    (56, 58, 0.0343, 0.0966, 0.0242, 0, 0),
    (51, 58, 0.0255, 0.0719, 0.01788, 0, 0),
    (54, 59, 0.0503, 0.2293, 0.0598, 0, 0),
    (56, 59, 0.0825, 0.251, 0.0569, 0, 0),
    (56, 59, 0.0803, 0.239, 0.0536, 0, 0),
    (55, 59, 0.04739, 0.2158, 0.05646, 0, 0),
    (59, 60, 0.0317, 0.145, 0.0376, 0, 0),
    (59, 61, 0.0328, 0.15, 0.0388, 0, 0),
    (60, 61, 0.00264, 0.0135, 0.01456, 0, 0),
    (60, 62, 0.0123, 0.0561, 0.01468, 0, 0),
    (61, 62, 0.00824, 0.0376, 0.0098, 0, 0),
    (63, 59, 0.0, 0.0386, 0.0, 0.96, 0),
    (63, 64, 0.00172, 0.02, 0.216, 0, 0),
    (64, 61, 0.0, 0.0268, 0.0, 0.985, 0),
    (38, 65, 0.00901, 0.0986, 1.046, 0, 0),
    (64, 65, 0.00269, 0.0302, 0.38, 0, 0),
    (49, 66, 0.018, 0.0919, 0.0248, 0, 0),
    (49, 66, 0.018, 0.0919, 0.0248, 0, 0),
    (62, 66, 0.0482, 0.218, 0.0578, 0, 0),
    (62, 67, 0.0258, 0.117, 0.031, 0, 0),
    (65, 66, 0.0, 0.037, 0.0, 0.935, 0),
    (66, 67, 0.0224, 0.1015, 0.02682, 0, 0),
    (65, 68, 0.00138, 0.016, 0.638, 0, 0),
    (47, 69, 0.0844, 0.2778, 0.07092, 0, 0),
    (49, 69, 0.0985, 0.324, 0.0828, 0, 0),
    (68, 69, 0.0, 0.037, 0.0, 0.935, 0),
    (69, 70, 0.03, 0.127, 0.122, 0, 0),
    (24, 70, 0.00221, 0.4115, 0.10198, 0, 0),
    (70, 71, 0.00882, 0.0355, 0.00878, 0, 0),
    (24, 72, 0.0488, 0.196, 0.0488, 0, 0),
    (71, 72, 0.0446, 0.18, 0.04444, 0, 0),
    (71, 73, 0.00866, 0.0454, 0.01178, 0, 0),
    (70, 74, 0.0401, 0.1323, 0.03368, 0, 0),
    (70, 75, 0.0428, 0.141, 0.036, 0, 0),
    (69, 75, 0.0405, 0.122, 0.124, 0, 0),
    (74, 75, 0.0123, 0.0406, 0.01034, 0, 0),
    (76, 77, 0.0444, 0.148, 0.0368, 0, 0),
    (69, 77, 0.0309, 0.101, 0.1038, 0, 0),
    (75, 77, 0.0601, 0.1999, 0.04978, 0, 0),
    (77, 78, 0.00376, 0.0124, 0.01264, 0, 0),
    (78, 79, 0.00546, 0.0244, 0.00648, 0, 0),
    (77, 80, 0.017, 0.0485, 0.0472, 0, 0),
    (77, 80, 0.0294, 0.105, 0.0228, 0, 0),
    (79, 80, 0.0156, 0.0704, 0.0187, 0, 0),
    (68, 81, 0.00175, 0.0202, 0.808, 0, 0),
    (81, 80, 0.0, 0.037, 0.0, 0.935, 0),
    (77, 82, 0.0298, 0.0853, 0.08174, 0, 0),
    (82, 83, 0.0112, 0.03665, 0.03796, 0, 0),
    (83, 84, 0.0625, 0.132, 0.0258, 0, 0),
    (83, 85, 0.043, 0.148, 0.0348, 0, 0),
    (84, 85, 0.0302, 0.0641, 0.01234, 0, 0),
    (85, 86, 0.035, 0.123, 0.0276, 0, 0),
    (86, 87, 0.02828, 0.2074, 0.0445, 0, 0),
    (85, 88, 0.02, 0.102, 0.0276, 0, 0),
    (85, 89, 0.0239, 0.173, 0.047, 0, 0),
    (88, 89, 0.0139, 0.0712, 0.01934, 0, 0),
    (89, 90, 0.0518, 0.188, 0.0528, 0, 0),
    (89, 90, 0.0238, 0.0997, 0.106, 0, 0),
    (90, 91, 0.0254, 0.0836, 0.0214, 0, 0),
    (89, 92, 0.0099, 0.0505, 0.0548, 0, 0),
    (89, 92, 0.0393, 0.1581, 0.0414, 0, 0),
    (91, 92, 0.0387, 0.1272, 0.03268, 0, 0),
    (92, 93, 0.0258, 0.0848, 0.0218, 0, 0),
    (92, 94, 0.0481, 0.158, 0.0406, 0, 0),
    (93, 94, 0.0223, 0.0732, 0.01876, 0, 0),
    (94, 95, 0.0132, 0.0434, 0.0111, 0, 0),
    (80, 96, 0.0356, 0.182, 0.0494, 0, 0),
    (82, 96, 0.0162, 0.053, 0.0544, 0, 0),
    (94, 96, 0.0269, 0.0869, 0.023, 0, 0),
    (80, 97, 0.0183, 0.0934, 0.0254, 0, 0),
    (80, 98, 0.0238, 0.108, 0.0286, 0, 0),
    (80, 99, 0.0454, 0.206, 0.0546, 0, 0),
    (92, 100, 0.0648, 0.295, 0.0472, 0, 0),
    (94, 100, 0.0178, 0.058, 0.0604, 0, 0),
    (95, 96, 0.0171, 0.0547, 0.01474, 0, 0),
    (96, 97, 0.0173, 0.0885, 0.024, 0, 0),
    (98, 100, 0.0397, 0.179, 0.0476, 0, 0),
    (99, 100, 0.018, 0.0813, 0.0216, 0, 0),
    (100, 101, 0.0277, 0.1262, 0.0328, 0, 0),
    (92, 102, 0.0123, 0.0559, 0.01464, 0, 0),
    (101, 102, 0.0246, 0.112, 0.0294, 0, 0),
    (100, 103, 0.016, 0.0525, 0.0536, 0, 0),
    (100, 104, 0.0451, 0.204, 0.0541, 0, 0),
    (103, 104, 0.0466, 0.1584, 0.0407, 0, 0),
    (103, 105, 0.0535, 0.1625, 0.0408, 0, 0),
    (100, 106, 0.0605, 0.229, 0.062, 0, 0),
    (104, 105, 0.00994, 0.0378, 0.00986, 0, 0),
    (105, 106, 0.014, 0.0547, 0.01434, 0, 0),
    (105, 107, 0.053, 0.183, 0.0472, 0, 0),
    (105, 108, 0.0261, 0.0703, 0.01844, 0, 0),
    (106, 107, 0.053, 0.183, 0.0472, 0, 0),
    (108, 109, 0.0105, 0.0288, 0.0076, 0, 0),
    (103, 110, 0.03906, 0.1813, 0.0461, 0, 0),
    (109, 110, 0.0278, 0.0762, 0.0202, 0, 0),
    (110, 111, 0.022, 0.0755, 0.02, 0, 0),
    (110, 112, 0.0247, 0.064, 0.062, 0, 0),
    (17, 113, 0.00913, 0.0301, 0.00768, 0, 0),
    (32, 113, 0.0615, 0.203, 0.0518, 0, 0),
    (32, 114, 0.0135, 0.0612, 0.01628, 0, 0),
    (27, 115, 0.0164, 0.0741, 0.01972, 0, 0),
    (114, 115, 0.0023, 0.0104, 0.00276, 0, 0),
    (68, 116, 0.00034, 0.00405, 0.164, 0, 0),
    (12, 117, 0.0329, 0.14, 0.0358, 0, 0),
    (75, 118, 0.0145, 0.0481, 0.01198, 0, 0),
    (76, 118, 0.0164, 0.0544, 0.01356, 0, 0),
]


def two_bus_case():
    bus = [(1, 3, 0.0, 0.0, 0, 0), (2, 1, 20.0, 10.0, 0, 0)]
    gen = [(1, 0.0, 1.0)]
    branch = [(1, 2, 0.01, 0.1, 0.0, 0, 0)]
    return bus, gen, branch


def synth300_case():
    """300 buses / 411 branches, reproducible, light loading."""
    n, nbr = 300, 411

    def lcg(state):
        return (state * 6364136223846793005 + 1442695040888963407) % (1 << 64)

    def unif(state, lo, hi):
        state = lcg(state)
        return state, lo + (hi - lo) * (state >> 11) / float(1 << 53)

    st = 20240801
    bus, gen = [], []
    for i in range(1, n + 1):
        if i == 1:
            bus.append((i, 3, 0.0, 0.0, 0, 0))
            gen.append((i, 0.0, 1.02))
        elif i % 5 == 0:
            bus.append((i, 2, 0.0, 0.0, 0, 0))
        else:
            st, p = unif(st, 4.0, 18.0)
            st, qr = unif(st, 0.25, 0.45)
            bus.append((i, 1, round(p, 2), round(p * qr, 2), 0, 0))
    total_load = sum(b[2] for b in bus)
    pv = [b[0] for b in bus if b[1] == 2]
    per_gen = round(total_load / len(pv), 2)
    for b in pv:
        st, vg = unif(st, 0.99, 1.04)
        gen.append((b, per_gen, round(vg, 3)))

    branch = []
    for i in range(1, n + 1):  # ring backbone
        j = i + 1 if i < n else 1
        st, r = unif(st, 0.01, 0.05)
        st, xr = unif(st, 2.5, 4.0)
        branch.append((i, j, round(r, 4), round(r * xr, 4), 0.02, 0, 0))
    chords = set()
    while len(branch) < nbr:  # seeded chords
        st, a = unif(st, 1, n + 1)
        st, span = unif(st, 4, 60)
        f = int(a)
        t = (f + int(span) - 1) % n + 1
        if f == t or (min(f, t), max(f, t)) in chords:
            continue
        chords.add((min(f, t), max(f, t)))
        st, r = unif(st, 0.02, 0.08)
        st, xr = unif(st, 2.5, 4.0)
        branch.append((f, t, round(r, 4), round(r * xr, 4), 0.04, 0, 0))
    return bus, gen, branch


# ---------------------------------------------------------------------------
# Conversion + validation
# ---------------------------------------------------------------------------

def to_case(name, bus, gen, branch, base_mva=100.0):
    gen_by_bus = {}
    for b, pg, vg in gen:
        if b in gen_by_bus:
            gen_by_bus[b] = (gen_by_bus[b][0] + pg, gen_by_bus[b][1])
        else:
            gen_by_bus[b] = (pg, vg)
    buses = []
    for bid, btype, pd, qd, gs, bs in bus:
        kind = {1: "pq", 2: "pv", 3: "slack"}[btype]
        rec = {
            "id": bid,
            "kind": kind,
            "p_load": pd / base_mva,
            "q_load": qd / base_mva,
            "g_shunt": gs / base_mva,
            "b_shunt": bs / base_mva,
        }
        if kind != "pq":
            if bid not in gen_by_bus:
                raise ValueError(f"{name}: bus {bid} is {kind} but has no generator")
            rec["v_setpoint"] = gen_by_bus[bid][1]
            rec["p_gen"] = gen_by_bus[bid][0] / base_mva
        buses.append(rec)
    branches = []
    for f, t, r, x, b, ratio, shift_deg in branch:
        branches.append({
            "from": f, "to": t, "r": r, "x": x, "b": b,
            "tap": ratio if ratio else 1.0,
            "shift": shift_deg * math.pi / 180.0,
        })
    return {"name": name, "base_mva": base_mva, "buses": buses, "branches": branches}


def validate_case(case):
    """Structural checks + Newton-Raphson power flow from flat start."""
    buses, branches = case["buses"], case["branches"]
    n = len(buses)
    ids = [b["id"] for b in buses]
    assert len(set(ids)) == n
    idx = {bid: i for i, bid in enumerate(ids)}
    assert sum(1 for b in buses if b["kind"] == "slack") == 1

    Y = np.zeros((n, n), dtype=complex)
    adj = {i: set() for i in range(n)}
    for br in branches:
        f, t = idx[br["from"]], idx[br["to"]]
        assert f != t
        assert br["r"] != 0 or br["x"] != 0
        ys = 1.0 / complex(br["r"], br["x"])
        bc = 1j * br["b"] / 2.0
        tap = br["tap"] * np.exp(1j * br["shift"])
        Y[f, f] += (ys + bc) / (br["tap"] ** 2)
        Y[f, t] += -ys / np.conj(tap)
        Y[t, f] += -ys / tap
        Y[t, t] += ys + bc
        adj[f].add(t)
        adj[t].add(f)
    for b in buses:
        i = idx[b["id"]]
        Y[i, i] += complex(b["g_shunt"], b["b_shunt"])

    seen, stack = set(), [0]
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        stack.extend(adj[u] - seen)
    assert len(seen) == n, f"{case['name']}: disconnected graph"

    # NR power flow, polar, flat start
    kind = [b["kind"] for b in buses]
    vm = np.array([b.get("v_setpoint", 1.0) for b in buses])
    va = np.zeros(n)
    p_spec = np.array([b.get("p_gen", 0.0) - b["p_load"] for b in buses])
    q_spec = np.array([-b["q_load"] for b in buses])
    pvpq = [i for i in range(n) if kind[i] != "slack"]
    pq = [i for i in range(n) if kind[i] == "pq"]
    for it in range(40):
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        dp = p_spec - S.real
        dq = q_spec - S.imag
        mis = np.concatenate([dp[pvpq], dq[pq]])
        if np.max(np.abs(mis)) < 1e-10:
            return it, vm, va
        # numerical Jacobian (fine at this scale, validation only)
        m = len(pvpq) + len(pq)
        J = np.zeros((m, m))
        h = 1e-6
        for c, i in enumerate(pvpq + pq):
            va2, vm2 = va.copy(), vm.copy()
            if c < len(pvpq):
                va2[i] += h
            else:
                vm2[i] += h
            V2 = vm2 * np.exp(1j * va2)
            S2 = V2 * np.conj(Y @ V2)
            J[:, c] = np.concatenate([(S2 - S).real[pvpq], (S2 - S).imag[pq]]) / h
        dx = np.linalg.solve(J, mis)
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
    raise RuntimeError(f"{case['name']}: power flow failed to converge")


def main():
    os.makedirs(BASE, exist_ok=True)
    cases = [
        to_case("two_bus", *two_bus_case()),
        to_case("ieee14", IEEE14_BUS, IEEE14_GEN, IEEE14_BRANCH),
        to_case("ieee30", IEEE30_BUS, IEEE30_GEN, IEEE30_BRANCH),
        to_case("ieee118", IEEE118_BUS, IEEE118_GEN, IEEE118_BRANCH),
        to_case("synth300", *synth300_case()),
    ]
    expected = {"two_bus": (2, 1), "ieee14": (14, 20), "ieee30": (30, 41),
                "ieee118": (118, 186), "synth300": (300, 411)}
    for case in cases:
        nb, nbr = expected[case["name"]]
        got = (len(case["buses"]), len(case["branches"]))
        assert got == (nb, nbr), f"{case['name']}: bus/branch count {got} != {(nb, nbr)}"
        iters, vm, va = validate_case(case)
        print(f"{case['name']}: n={nb} branches={nbr} NR iters={iters} "
              f"|V| in [{vm.min():.4f}, {vm.max():.4f}]")
        assert vm.min() > 0.80 and vm.max() < 1.15, f"{case['name']}: implausible voltages"
        path = os.path.join(BASE, case["name"] + ".json")
        with open(path, "w") as fh:
            json.dump(case, fh, indent=1)
            fh.write("\n")
        print(f"  wrote {os.path.relpath(path)}")


if __name__ == "__main__":
    sys.exit(main())
