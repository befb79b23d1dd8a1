"""Cost-sensitive SVM risk prediction and evaluation."""
