# Blackbox optimizers
