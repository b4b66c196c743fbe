"""csdial: desk-scale customer-service dialogue toolkit.

Information extraction over dialogue transcripts (sequence labeling with CRF
decoding, mention-pair coreference, entity-slot alignment), per-dialogue
local knowledge bases, a KB-grounded dialogue runtime, the full automatic
evaluation suite, and a human-evaluation HTTP service.
"""

__version__ = "0.1.0"
