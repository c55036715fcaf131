"""
Confusion matrices and accuracy tables
======================================

Rows are the map's class, columns the reference class. User's accuracy
reads along a row, producer's accuracy down a column.
"""

import numpy as np

from pgmfuse import ConfusionMatrix, class_accuracies, overall_accuracy
from pgmfuse.assess import format_table, percent

# a seven-class single-source map scored against 439 validation points
counts = np.array([
    [93, 4, 5, 6, 0, 8, 0],
    [9, 97, 0, 21, 0, 0, 0],
    [2, 0, 1, 1, 0, 0, 0],
    [2, 33, 0, 46, 0, 0, 0],
    [0, 0, 0, 0, 9, 0, 0],
    [8, 0, 3, 0, 0, 75, 2],
    [3, 1, 0, 4, 2, 0, 4],
])
names = ["CR", "FR", "GR", "SHR", "WB", "IMP", "BL"]
cm = ConfusionMatrix(counts)
print(format_table(cm, names))

# grassland is rarely mapped and rarely right
ua, pa = class_accuracies(cm)[2]
print(f"GR: UA {percent(ua)}%, PA {percent(pa)}%")

# a class absent from both map and reference has no accuracy, not zero
sparse = ConfusionMatrix([[5, 1, 0], [0, 4, 0], [0, 0, 0]])
print(class_accuracies(sparse))
print("OA", percent(overall_accuracy(sparse), 1))
