import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizerFast

TINY_DIMENSION = 32


@pytest.fixture(scope="session")
def tiny_dimension():
    return TINY_DIMENSION


def _modules():
    try:
        from sentence_transformers.sentence_transformer.modules import Pooling, Transformer
    except ImportError:  # module path before the 5.x rename
        from sentence_transformers.models import Pooling, Transformer
    return Pooling, Transformer


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A miniature randomly initialized sentence encoder saved to disk.

    Character-level WordPiece vocabulary so arbitrary lowercase text
    tokenizes to real pieces; weights are seeded, so the model is identical
    on every build and inference is bit-reproducible on CPU.
    """
    from sentence_transformers import SentenceTransformer

    base = tmp_path_factory.mktemp("tiny_encoder")
    hf_dir, st_dir = base / "hf", base / "st"
    tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    tokens += list("abcdefghijklmnopqrstuvwxyz")
    tokens += ["##" + c for c in "abcdefghijklmnopqrstuvwxyz"]
    tokens += list("0123456789")
    config = BertConfig(
        vocab_size=len(tokens),
        hidden_size=TINY_DIMENSION,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=37,
        max_position_embeddings=64,
    )
    torch.manual_seed(0)
    BertModel(config).save_pretrained(hf_dir)
    BertTokenizerFast(vocab={t: i for i, t in enumerate(tokens)}).save_pretrained(hf_dir)

    pooling_cls, transformer_cls = _modules()
    word = transformer_cls(str(hf_dir), max_seq_length=32)
    pooling = pooling_cls(TINY_DIMENSION, pooling_mode="mean")
    SentenceTransformer(modules=[word, pooling]).save(str(st_dir))
    return str(st_dir)
