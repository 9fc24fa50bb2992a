"""Semi-supervised training of compact classifiers with numpy."""
