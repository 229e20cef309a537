import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toxiclass import corpus as C
from toxiclass.errors import ConfigError, DataError, IngestError


class TestPreprocess:
    def test_strips_urls(self):
        out = C.preprocess("see https://a.example/x?y=1 and www.b.example/page now")
        assert out == "see and now"

    def test_strips_punctuation(self):
        assert C.preprocess("stop, right there!!") == "stop right there"

    def test_strips_emoticons(self):
        assert C.preprocess("fine \U0001F600 day ❤") == "fine day"

    def test_keeps_bengali_zwj(self):
        # zero-width joiners are part of the script, not decoration
        text = "ক্‍য"
        assert C.preprocess(text) == text

    def test_stopwords_removed_after_char_filtering(self):
        cfg = C.PreprocessConfig(stopwords=frozenset({"the", "a"}))
        assert C.preprocess("The the a big, dog!", cfg) == "The big dog"

    def test_whitespace_collapses(self):
        assert C.preprocess("a   b\t\nc") == "a b c"

    def test_flags_can_disable_each_step(self):
        cfg = C.PreprocessConfig(remove_urls=False, remove_punctuation=False,
                                 remove_emoticons=False)
        assert C.preprocess("keep: www.x.y !", cfg) == "keep: www.x.y !"

    def test_empty_result_allowed(self):
        assert C.preprocess("!!! ???") == ""

    @settings(max_examples=200)
    @given(st.text(max_size=80))
    def test_idempotent(self, text):
        once = C.preprocess(text)
        assert C.preprocess(once) == once

    @settings(max_examples=100)
    @given(st.text(max_size=80))
    def test_output_single_spaced(self, text):
        out = C.preprocess(text)
        assert "  " not in out and out == out.strip()


class TestVocabulary:
    def test_reserved_ids(self):
        v = C.build_vocab(["b a a"])
        assert v.id_to_token[C.PAD_ID] == C.PAD_TOKEN
        assert v.id_to_token[C.UNK_ID] == C.UNK_TOKEN
        assert v.get("a") == 2  # most frequent content token comes first
        assert v.get("b") == 3

    def test_frequency_then_lexicographic(self):
        v = C.build_vocab(["c b b a a"])
        assert v.id_to_token[2:] == ["a", "b", "c"]

    def test_unknown_maps_to_unk(self):
        v = C.build_vocab(["x"])
        assert v.get("never-seen") == C.UNK_ID

    def test_max_size_includes_reserved(self):
        v = C.build_vocab(["a b c d"], max_size=4)
        assert len(v) == 4 and v.id_to_token[2:] == ["a", "b"]

    def test_min_freq(self):
        v = C.build_vocab(["a a b"], min_freq=2)
        assert "b" not in v and "a" in v

    def test_max_size_too_small(self):
        with pytest.raises(ConfigError):
            C.build_vocab(["a"], max_size=1)

    def test_save_load_round_trip(self, tmp_path):
        v = C.build_vocab(["gamma beta beta alpha alpha alpha"])
        path = tmp_path / "vocab.txt"
        v.save(path)
        again = C.Vocabulary.load(path)
        assert again.id_to_token == v.id_to_token
        assert again.content_hash() == v.content_hash()

    def test_hash_tracks_content(self):
        assert (C.build_vocab(["a b"]).content_hash()
                != C.build_vocab(["a c"]).content_hash())

    def test_load_rejects_missing_header(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("a\nb\n")
        with pytest.raises(DataError):
            C.Vocabulary.load(path)


class TestTokenize:
    @pytest.fixture
    def vocab(self):
        return C.build_vocab(["dog cat dog bird"])

    def test_pads_to_max_len(self, vocab):
        # ranked: dog (freq 2), then bird/cat alphabetically
        seq = C.tokenize("dog cat", vocab, max_len=5)
        assert seq.input_ids.tolist() == [2, 4, 0, 0, 0]
        assert seq.mask.tolist() == [1.0, 1.0, 0.0, 0.0, 0.0]
        assert seq.true_length == 2

    def test_head_truncation(self, vocab):
        seq = C.tokenize("dog cat bird dog", vocab, max_len=2)
        assert seq.input_ids.tolist() == [vocab.get("dog"), vocab.get("cat")]
        assert seq.true_length == 2

    def test_unknown_token(self, vocab):
        seq = C.tokenize("zebra", vocab, max_len=3)
        assert seq.input_ids[0] == C.UNK_ID

    def test_empty_text(self, vocab):
        seq = C.tokenize("", vocab, max_len=3)
        assert seq.true_length == 0 and seq.mask.sum() == 0

    def test_bad_max_len(self, vocab):
        with pytest.raises(ConfigError):
            C.tokenize("dog", vocab, max_len=0)

    def test_detokenize_round_trip(self, vocab):
        seq = C.tokenize("dog bird cat", vocab, max_len=10)
        assert C.detokenize(seq, vocab) == "dog bird cat"

    @settings(max_examples=100)
    @given(st.lists(st.sampled_from(["dog", "cat", "bird", "zzz"]), max_size=12))
    def test_mask_marks_exactly_true_length(self, tokens):
        vocab = C.build_vocab(["dog cat bird"])
        seq = C.tokenize(" ".join(tokens), vocab, max_len=8)
        n = min(len(tokens), 8)
        assert seq.true_length == n
        assert seq.mask[:n].tolist() == [1.0] * n
        assert seq.mask[n:].sum() == 0
        assert (seq.input_ids[n:] == C.PAD_ID).all()


class TestDocumentValidation:
    def test_consistent_document_passes(self):
        C.Document("d1", "x", toxic=True, labels=(1, 0, 0, 0, 0, 0)).validate()
        C.Document("d2", "x", toxic=False, labels=(0, 0, 0, 0, 0, 0)).validate()

    def test_toxic_without_labels_rejected(self):
        with pytest.raises(DataError):
            C.Document("d", "x", toxic=True, labels=(0,) * 6).validate()

    def test_labels_without_toxic_rejected(self):
        with pytest.raises(DataError):
            C.Document("d", "x", toxic=False, labels=(0, 1, 0, 0, 0, 0)).validate()

    def test_wrong_arity_rejected(self):
        with pytest.raises(DataError):
            C.Document("d", "x", toxic=True, labels=(1, 0)).validate()


def _write_csv(path, rows, header="id,text,toxic,vulgar,hate,religious,threat,troll,insult"):
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")


CSV_SPEC = C.FormatSpec(kind="csv", text_field="text", toxic_field="toxic",
                        label_fields=C.LABELS, id_field="id")


class TestIngest:
    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["a,hello world,1,1,0,0,0,0,0", "b,all clear,0,0,0,0,0,0,0"])
        docs = C.ingest(path, CSV_SPEC)
        assert [d.id for d in docs] == ["a", "b"]
        assert docs[0].toxic is True and docs[0].labels == (1, 0, 0, 0, 0, 0)
        assert docs[1].toxic is False

    def test_jsonl(self, tmp_path):
        path = tmp_path / "d.jsonl"
        rows = [{"text": "hi", "toxic": 1, **{k: int(k == "hate") for k in C.LABELS}}]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        spec = C.FormatSpec(kind="jsonl", toxic_field="toxic", label_fields=C.LABELS)
        docs = C.ingest(path, spec)
        assert docs[0].labels == (0, 1, 0, 0, 0, 0)

    def test_toxic_derived_from_labels(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("text,vulgar,hate,religious,threat,troll,insult\n"
                        "bad stuff,0,0,0,1,0,0\nfine,0,0,0,0,0,0\n")
        spec = C.FormatSpec(kind="csv", label_fields=C.LABELS)
        docs = C.ingest(path, spec)
        assert docs[0].toxic is True and docs[1].toxic is False

    def test_all_bad_rows_reported(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, [
            "a,ok,1,1,0,0,0,0,0",
            "b,bad flag,2,0,0,0,0,0,0",       # non-boolean toxic
            "c,mismatch,1,0,0,0,0,0,0",        # toxic but no labels
        ])
        with pytest.raises(IngestError) as err:
            C.ingest(path, CSV_SPEC)
        assert len(err.value.rows) == 2
        assert {r for r, _ in err.value.rows} == {3, 4}

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            C.ingest(tmp_path / "nope.csv", CSV_SPEC)

    def test_format_spec_needs_some_gold(self):
        with pytest.raises(ConfigError):
            C.FormatSpec(kind="csv", toxic_field=None, label_fields=None)

    def test_format_spec_label_arity(self):
        with pytest.raises(ConfigError):
            C.FormatSpec(kind="csv", label_fields=("a", "b"))


class TestStats:
    def test_counts(self):
        docs = [
            C.Document("1", "x", toxic=True, labels=(1, 1, 0, 0, 0, 0)),
            C.Document("2", "x", toxic=True, labels=(0, 0, 0, 0, 0, 1)),
            C.Document("3", "x", toxic=False, labels=(0,) * 6),
        ]
        s = C.stats(docs)
        assert s["total"] == 3 and s["toxic"] == 2 and s["non_toxic"] == 1
        assert s["per_class"]["vulgar"] == 1 and s["per_class"]["insult"] == 1
        assert s["cardinality"] == {"0": 1, "1": 1, "2": 1}

    def test_accepts_generator(self):
        docs = (C.Document(str(i), "x", toxic=False, labels=(0,) * 6)
                for i in range(4))
        assert C.stats(docs)["total"] == 4


def _toy_corpus(n=600, seed=5):
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n):
        labels = tuple(int(rng.random() < p)
                       for p in (0.15, 0.12, 0.08, 0.09, 0.10, 0.17))
        docs.append(C.Document(f"d{i}", f"text {i}", toxic=any(labels),
                               labels=labels))
    return docs


class TestStratifiedSplit:
    def test_fold_sizes(self):
        docs = _toy_corpus()
        spec = C.SplitSpec(seed=3)
        train, val, test = C.stratified_split(docs, spec)
        assert abs(len(train) - 360) <= 1
        assert abs(len(val) - 144) <= 1
        assert abs(len(test) - 96) <= 1
        assert len(train) + len(val) + len(test) == 600

    def test_partition_and_order_preserved(self):
        docs = _toy_corpus(200)
        train, val, test = C.stratified_split(docs, C.SplitSpec(seed=1))
        ids = sorted(d.id for fold in (train, val, test) for d in fold)
        assert ids == sorted(d.id for d in docs)
        pos = {d.id: i for i, d in enumerate(docs)}
        for fold in (train, val, test):
            order = [pos[d.id] for d in fold]
            assert order == sorted(order)

    def test_label_balance(self):
        docs = _toy_corpus()
        train, val, test = C.stratified_split(docs, C.SplitSpec(seed=3))
        totals = np.array([d.labels for d in docs]).sum(axis=0)
        for fold, frac in ((train, 0.60), (val, 0.24), (test, 0.16)):
            counts = np.array([d.labels for d in fold]).sum(axis=0)
            assert np.all(np.abs(counts - frac * totals) <= 2), (counts, frac * totals)

    def test_deterministic(self):
        docs = _toy_corpus(150)
        a = C.stratified_split(docs, C.SplitSpec(seed=9))
        b = C.stratified_split(docs, C.SplitSpec(seed=9))
        assert [[d.id for d in f] for f in a] == [[d.id for d in f] for f in b]
        c = C.stratified_split(docs, C.SplitSpec(seed=10))
        assert [[d.id for d in f] for f in a] != [[d.id for d in f] for f in c]

    def test_binary_only_documents_split_on_toxic(self):
        docs = [C.Document(f"d{i}", "x", toxic=i % 3 == 0) for i in range(100)]
        train, val, test = C.stratified_split(docs, C.SplitSpec(seed=0))
        n_toxic = sum(d.toxic for d in docs)
        got = sum(d.toxic for d in train)
        assert abs(got - 0.6 * n_toxic) <= 2

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            C.SplitSpec(train_fraction=0.7, val_fraction=0.2,
                        test_fraction=0.2).validate()
        with pytest.raises(ConfigError):
            C.SplitSpec(train_fraction=0.0, val_fraction=0.5,
                        test_fraction=0.5).validate()

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            C.stratified_split([], C.SplitSpec())
