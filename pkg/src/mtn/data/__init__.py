from .batching import Batch, collate, length_key, make_batches, pad_ids
from .dataset import (DatasetFormatError, DialogueExample, corpus_tokens, load_dataset,
                      parse_dialogs, write_references)
from .features import (FeatureFormatError, FeatureStore, ModalityFeatures, decode_features,
                       encode_features, load_features, write_features)
from .synth import grounded_keyword, synth_corpus, write_synth
from .text import (EOS, EOS_ID, PAD, PAD_ID, SOS, SOS_ID, UNK, UNK_ID, Vocabulary,
                   build_vocab, detokenize, tokenize)

__all__ = [
    "Batch", "DatasetFormatError", "DialogueExample", "EOS", "EOS_ID", "FeatureFormatError",
    "FeatureStore", "ModalityFeatures", "PAD", "PAD_ID", "SOS", "SOS_ID", "UNK", "UNK_ID",
    "Vocabulary", "build_vocab", "collate", "corpus_tokens", "decode_features", "detokenize",
    "encode_features", "grounded_keyword", "length_key", "load_dataset", "load_features",
    "make_batches", "pad_ids", "parse_dialogs", "synth_corpus", "tokenize", "write_features",
    "write_references", "write_synth",
]
