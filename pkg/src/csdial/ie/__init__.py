"""Four-stage extraction pipeline: sequence labeling with CRF decoding,
mention-pair coreference, and marker-based entity-slot alignment, all over a
pluggable character encoder."""

from .crf import crf_nll, forward_log_partition, viterbi_decode

__all__ = ["crf_nll", "forward_log_partition", "viterbi_decode"]
