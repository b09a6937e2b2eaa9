from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .decode import (BeamHypothesis, beam_search, beam_search_core, beam_search_hypothesis,
                     candidate_scores, greedy_decode, greedy_decode_batch, rank_candidates,
                     sequence_log_probs, strip_special)
from .train import (TrainConfig, TrainResult, compute_loss, crop_target, perplexity,
                    query_labels, split_target, train)

__all__ = [
    "BeamHypothesis", "Checkpoint", "CheckpointError", "TrainConfig", "TrainResult",
    "beam_search", "beam_search_core", "beam_search_hypothesis", "candidate_scores",
    "compute_loss", "crop_target", "greedy_decode", "greedy_decode_batch", "load_checkpoint",
    "perplexity", "query_labels", "rank_candidates", "save_checkpoint", "sequence_log_probs",
    "split_target", "strip_special", "train",
]
