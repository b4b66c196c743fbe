from __future__ import annotations

import numpy as np
import pytest

from csdial.ie.encoder import CharVocab, ExternalEncoderClient, SequenceEncoder
from csdial.ie.tagger import CrfTagger, TrainingConfig


@pytest.fixture(scope="module")
def toy_vocab():
    return CharVocab.from_texts(["请问38M套餐的价格是多少", "来电显示的资费是5元"])


def test_training_config_validates():
    with pytest.raises(ValueError):
        TrainingConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainingConfig(epochs=-1)
    cfg = TrainingConfig()
    assert (cfg.learning_rate, cfg.batch_size, cfg.epochs) == (1e-3, 64, 20)


def test_encoder_output_length_equals_input_length(toy_vocab):
    enc = SequenceEncoder(len(toy_vocab), 8, 6)
    for text in ["你好", "请问38M套餐的价格是多少"]:
        hs, _ = enc.encode_ids(toy_vocab.encode(text))
        assert hs.shape == (len(text), enc.dim)


def test_empty_text_tags_empty(toy_vocab):
    tagger = CrfTagger(toy_vocab, ["套餐"], dim_embed=8, dim_hidden=6)
    assert tagger.tag_utterance("") == []


def test_overfit_single_example_recovers_span(toy_vocab):
    text = "请问38M套餐的价格是多少"
    spans = [(2, 7, "套餐")]
    tagger = CrfTagger(toy_vocab, ["套餐", "业务"], dim_embed=12, dim_hidden=10, seed=1)
    cfg = TrainingConfig(learning_rate=5e-3, batch_size=1, epochs=60, seed=1)
    tagger.fit([(text, spans)], cfg)
    assert tagger.tag_utterance(text) == spans


def test_all_o_decode_gives_empty(toy_vocab):
    text = "你好"
    tagger = CrfTagger(toy_vocab, ["套餐"], dim_embed=8, dim_hidden=6, seed=2)
    cfg = TrainingConfig(learning_rate=5e-3, batch_size=1, epochs=40, seed=2)
    tagger.fit([(text, [])], cfg)
    assert tagger.tag_utterance(text) == []


def test_full_batch_sgd_loss_non_increasing(toy_vocab):
    examples = [
        ("请问38M套餐的价格是多少", [(2, 7, "套餐")]),
        ("来电显示的资费是5元", [(0, 4, "业务")]),
        ("你好", []),
        ("38M套餐的价格是38元", [(0, 5, "套餐")]),
        ("帮我办理来电显示", [(4, 8, "业务")]),
    ]
    tagger = CrfTagger(toy_vocab, ["套餐", "业务"], dim_embed=10, dim_hidden=8, seed=3)
    cfg = TrainingConfig(learning_rate=0.05, batch_size=5, epochs=30, optimizer="sgd", seed=3)
    history = tagger.fit(examples, cfg)
    for prev, cur in zip(history, history[1:]):
        assert cur <= prev + 1e-9
    assert history[-1] < history[0]


def test_save_load_round_trip(tmp_path, toy_vocab):
    tagger = CrfTagger(toy_vocab, ["套餐"], dim_embed=8, dim_hidden=6, seed=4)
    text = "38M套餐的价格是38元"
    tagger.fit([(text, [(0, 5, "套餐")])], TrainingConfig(epochs=15, batch_size=1, seed=4))
    path = tmp_path / "tagger.npz"
    tagger.save(path)
    again = CrfTagger.load(path)
    assert again.tag_utterance(text) == tagger.tag_utterance(text)
    assert np.allclose(again.transitions.params["A"], tagger.transitions.params["A"])


def test_external_encoder_client_round_trip():
    # Serve a trivial one-shot encoder over a socket in a thread.
    import json
    import socket
    import threading

    dim = 4

    def serve(server_sock):
        conn, _ = server_sock.accept()
        with conn:
            buf = b""
            while not buf.endswith(b"\n"):
                buf += conn.recv(65536)
            req = json.loads(buf.decode("utf-8"))
            vectors = [[[float(len(t))] * dim for _ in t] for t in req["texts"]]
            conn.sendall((json.dumps({"vectors": vectors}) + "\n").encode("utf-8"))

    server = socket.socket()
    server.bind(("127.0.0.1", 0))
    server.listen(1)
    port = server.getsockname()[1]
    thread = threading.Thread(target=serve, args=(server,), daemon=True)
    thread.start()

    client = ExternalEncoderClient("127.0.0.1", port, dim=dim)
    out = client.encode_texts(["你好呀"])
    thread.join(timeout=5)
    server.close()
    assert out[0].shape == (3, dim)
    assert np.all(out[0] == 3.0)
