# Variance-reduction verification
