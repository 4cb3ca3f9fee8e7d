# Sampling distributions and DPP machinery
