# Experiment configs, runner and reporting
