# Shuffling Gradient Minimax Solvers Package
