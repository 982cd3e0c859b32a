"""Stage two: the VP-SDE, samplers and the speech-conditioned motion prior."""
