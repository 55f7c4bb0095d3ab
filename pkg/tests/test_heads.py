import math

import numpy as np
import pytest

from monoglot.encoder.checkpoint import (
    EncoderCheckpoint,
    load_checkpoint,
    save_checkpoint,
    vocab_fingerprint,
)
from monoglot.encoder.model import desk_config, init_model
from monoglot.heads import (
    FineTuneConfig,
    LabeledExample,
    SearchSpace,
    TaskError,
    TaskSpec,
    TOXICITY_CATEGORIES,
    attach_head,
    classification_loss,
    encode_texts,
    finetune,
    forward_classify,
    predict,
    random_search,
    read_labeled_jsonl,
    split_dataset,
    toxicity_multilabel_spec,
)

from oracle import naive_classify


@pytest.fixture(scope="module")
def base_ckpt(fixture_vocab):
    cfg = desk_config(len(fixture_vocab), hidden_dim=16, num_layers=1, num_heads=2,
                      ff_dim=32, max_positions=16, dropout_prob=0.0)
    return EncoderCheckpoint(cfg, init_model(cfg, seed=4),
                             vocab_fingerprint(fixture_vocab), {"steps": 0})


def binary_spec():
    return TaskSpec(kind="binary", labels=("fake", "real"))


class TestSpec:
    def test_binary_needs_two(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="binary", labels=("a", "b", "c"))

    def test_default_multilabel_categories(self):
        assert toxicity_multilabel_spec().labels == TOXICITY_CATEGORIES
        assert toxicity_multilabel_spec().thresholds == (0.5,) * 6

    def test_duplicate_labels(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="multiclass", labels=("a", "a", "b"))

    def test_threshold_range(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="multilabel", labels=("a", "b"), thresholds=(0.5, 1.0))


class TestAttachHead:
    def test_logit_counts(self, base_ckpt):
        assert attach_head(base_ckpt, binary_spec(), 0).params["head.weight"].shape[1] == 2
        spec7 = TaskSpec(kind="multiclass", labels=tuple("abcdefg"))
        assert attach_head(base_ckpt, spec7, 0).params["head.weight"].shape[1] == 7

    def test_same_seed_same_init(self, base_ckpt):
        a = attach_head(base_ckpt, binary_spec(), 5)
        b = attach_head(base_ckpt, binary_spec(), 5)
        assert np.array_equal(a.params["head.weight"], b.params["head.weight"])

    def test_encoder_copied_not_shared(self, base_ckpt):
        model = attach_head(base_ckpt, binary_spec(), 0)
        model.params["embeddings.token"][0, 0] = 99.0
        assert base_ckpt.params["embeddings.token"][0, 0] != 99.0

    def test_mlm_head_dropped(self, base_ckpt):
        model = attach_head(base_ckpt, binary_spec(), 0)
        assert not any(k.startswith("mlm.") for k in model.params)


class TestForwardClassify:
    def test_multiclass_probs_sum_to_one(self, base_ckpt, fixture_vocab):
        spec = TaskSpec(kind="multiclass", labels=("x", "y", "z"))
        model = attach_head(base_ckpt, spec, 1)
        seqs = encode_texts(["dadka tagay", "wararka maanta"], fixture_vocab, 12)
        probs = forward_classify(model, seqs)
        assert probs.shape == (2, 3)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_zero_weight_head_uniform(self, base_ckpt, fixture_vocab):
        model = attach_head(base_ckpt, binary_spec(), 1)
        model.params["head.weight"][:] = 0.0
        model.params["head.bias"][:] = 0.0
        seqs = encode_texts(["dadka tagay"], fixture_vocab, 12)
        assert np.allclose(forward_classify(model, seqs), 0.5, atol=1e-12)

        ml = attach_head(base_ckpt, toxicity_multilabel_spec(), 1)
        ml.params["head.weight"][:] = 0.0
        ml.params["head.bias"][:] = 0.0
        assert np.allclose(forward_classify(ml, seqs), 0.5, atol=1e-12)

    def test_matches_naive_oracle(self, base_ckpt, fixture_vocab):
        for kind, labels in [("multiclass", ("x", "y", "z")),
                             ("multilabel", ("a", "b"))]:
            model = attach_head(base_ckpt, TaskSpec(kind=kind, labels=labels), 3)
            seqs = encode_texts(["dadka tagay guriga", "shalay"], fixture_vocab, 10)
            probs = forward_classify(model, seqs)
            ids = [list(s.ids) for s in seqs]
            mask = [list(s.attention_mask) for s in seqs]
            o = naive_classify(model.config, model.params, ids, mask, kind)
            assert np.max(np.abs(probs - np.array(o))) <= 1e-5

    def test_fingerprint_mismatch(self, base_ckpt):
        from monoglot.encoder.checkpoint import CheckpointError
        from monoglot.wordpiece import SPECIALS, SubwordVocabulary

        other = SubwordVocabulary(list(SPECIALS) + ["q", "##q"])
        with pytest.raises(CheckpointError, match="fingerprint"):
            encode_texts(["q"], other, 8, base_ckpt.vocab_fingerprint)


class TestLoss:
    def test_multilabel_equals_mean_bce_by_hand(self):
        logits = np.array([[0.3, -1.2, 2.0], [0.0, 0.5, -0.7]])
        targets = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
        loss, _ = classification_loss("multilabel", logits, targets)
        hand = 0.0
        for i in range(2):
            for j in range(3):
                p = 1.0 / (1.0 + math.exp(-logits[i, j]))
                hand += -(targets[i, j] * math.log(p) + (1 - targets[i, j]) * math.log(1 - p))
        hand /= 6.0
        assert abs(loss - hand) <= 1e-12

    def test_single_label_ce_by_hand(self):
        logits = np.array([[1.0, -1.0]])
        loss, _ = classification_loss("binary", logits, np.array([0]))
        hand = -math.log(math.exp(1.0) / (math.exp(1.0) + math.exp(-1.0)))
        assert abs(loss - hand) <= 1e-12


class TestFinetune:
    def test_epochs_zero_unchanged(self, base_ckpt, fixture_vocab):
        model = attach_head(base_ckpt, binary_spec(), 0)
        train = [LabeledExample("a", "dadka tagay", "fake")]
        tuned, history = finetune(model, train, [], fixture_vocab,
                                  FineTuneConfig(epochs=0))
        assert history == []
        assert all(np.array_equal(tuned.params[k], model.params[k])
                   for k in model.params)

    def test_empty_training_set(self, base_ckpt, fixture_vocab):
        model = attach_head(base_ckpt, binary_spec(), 0)
        with pytest.raises(TaskError, match="empty"):
            finetune(model, [], [], fixture_vocab, FineTuneConfig())

    def test_separable_fixture_reaches_high_accuracy(self, base_ckpt, fixture_vocab,
                                                     fixtures_dir):
        examples = read_labeled_jsonl(fixtures_dir / "binary_separable.jsonl")
        model = attach_head(base_ckpt, binary_spec(), 0)
        cfg = FineTuneConfig(lr=3e-3, batch_size=8, epochs=30, seed=1, max_len=12,
                             dropout_prob=0.0)
        tuned, history = finetune(model, examples, examples, fixture_vocab, cfg)
        assert tuned.training_meta["best_val_metric"] >= 0.99

    def test_deterministic_history(self, base_ckpt, fixture_vocab, fixtures_dir):
        examples = read_labeled_jsonl(fixtures_dir / "binary_separable.jsonl")[:8]
        model = attach_head(base_ckpt, binary_spec(), 0)
        cfg = FineTuneConfig(lr=1e-3, batch_size=4, epochs=3, seed=7, max_len=12)
        _, h1 = finetune(model, examples, examples, fixture_vocab, cfg)
        _, h2 = finetune(model, examples, examples, fixture_vocab, cfg)
        assert h1 == h2

    def test_does_not_mutate_input_checkpoint(self, base_ckpt, fixture_vocab,
                                              fixtures_dir, tmp_path):
        path = tmp_path / "base.ckpt"
        save_checkpoint(base_ckpt, path)
        before = path.read_bytes()
        examples = read_labeled_jsonl(fixtures_dir / "binary_separable.jsonl")[:8]
        model = attach_head(base_ckpt, binary_spec(), 0)
        snapshot = {k: v.copy() for k, v in base_ckpt.params.items()}
        finetune(model, examples, examples, fixture_vocab,
                 FineTuneConfig(epochs=2, max_len=12))
        assert all(np.array_equal(base_ckpt.params[k], snapshot[k]) for k in snapshot)
        save_checkpoint(base_ckpt, path)
        assert path.read_bytes() == before

    def test_best_epoch_matches_returned_weights(self, base_ckpt, fixture_vocab,
                                                 fixtures_dir):
        from monoglot.heads import evaluate_metric

        examples = read_labeled_jsonl(fixtures_dir / "binary_separable.jsonl")
        train, val = examples[:24], examples[24:]
        model = attach_head(base_ckpt, binary_spec(), 0)
        cfg = FineTuneConfig(lr=3e-3, batch_size=8, epochs=10, seed=2, max_len=12)
        tuned, history = finetune(model, train, val, fixture_vocab, cfg)
        best_epoch = tuned.training_meta["best_epoch"]
        best_recorded = max(h["val_metric"] for h in history)
        assert history[best_epoch]["val_metric"] == best_recorded
        val_seqs = encode_texts([ex.text for ex in val], fixture_vocab, 12)
        re_eval = evaluate_metric(tuned, val_seqs, val)
        assert abs(re_eval - tuned.training_meta["best_val_metric"]) <= 1e-6

    def test_multilabel_finetune_runs(self, base_ckpt, fixture_vocab, fixtures_dir):
        spec = TaskSpec(kind="multilabel", labels=("abuse", "insult", "threat"))
        examples = read_labeled_jsonl(fixtures_dir / "toxicity_multilabel.jsonl")
        model = attach_head(base_ckpt, spec, 0)
        tuned, history = finetune(model, examples, examples, fixture_vocab,
                                  FineTuneConfig(epochs=2, max_len=14))
        assert len(history) == 2
        assert "val_metric" in history[0]


class TestPredict:
    def test_argmax_label(self, base_ckpt, fixture_vocab):
        model = attach_head(base_ckpt, binary_spec(), 1)
        model.params["head.weight"][:] = 0.0
        model.params["head.bias"][:] = np.array([2.0, -2.0], dtype=np.float32)
        out = predict(model, ["dadka"], fixture_vocab, max_len=8)
        assert out == ["fake"]

    def test_exact_tie_first_label(self, base_ckpt, fixture_vocab):
        model = attach_head(base_ckpt, binary_spec(), 1)
        model.params["head.weight"][:] = 0.0
        model.params["head.bias"][:] = 0.0
        assert predict(model, ["dadka"], fixture_vocab, max_len=8) == ["fake"]

    def test_multilabel_threshold(self, base_ckpt, fixture_vocab):
        spec = TaskSpec(kind="multilabel", labels=("a", "b", "c"))
        model = attach_head(base_ckpt, spec, 1)
        model.params["head.weight"][:] = 0.0
        # sigmoid(1.0)=0.73, sigmoid(-0.4)=0.40, sigmoid(0.0)=0.5
        model.params["head.bias"][:] = np.array([1.0, -0.4, 0.0], dtype=np.float32)
        [labels] = predict(model, ["dadka"], fixture_vocab, max_len=8)
        assert labels == frozenset({"a", "c"})  # >= threshold keeps the boundary

    def test_label_permutation_equivariance(self, base_ckpt, fixture_vocab):
        spec = TaskSpec(kind="multiclass", labels=("x", "y", "z"))
        model = attach_head(base_ckpt, spec, 3)
        perm = [2, 0, 1]
        spec_p = TaskSpec(kind="multiclass", labels=tuple(spec.labels[i] for i in perm))
        params_p = {k: v.copy() for k, v in model.params.items()}
        params_p["head.weight"] = model.params["head.weight"][:, perm]
        params_p["head.bias"] = model.params["head.bias"][perm]
        from monoglot.heads import TaskModel

        model_p = TaskModel(model.config, params_p, spec_p, model.vocab_fingerprint)
        texts = ["dadka tagay", "wararka shalay arkay"]
        seqs = encode_texts(texts, fixture_vocab, 12)
        probs = forward_classify(model, seqs)
        probs_p = forward_classify(model_p, seqs)
        assert np.allclose(probs[:, perm], probs_p, atol=1e-12)
        assert predict(model, texts, fixture_vocab, 12) == \
            predict(model_p, texts, fixture_vocab, 12)


class TestSplit:
    def make(self, n, labels=("fake", "real")):
        return [LabeledExample(f"e{i}", f"text {i}", labels[i % len(labels)])
                for i in range(n)]

    def test_all_train(self):
        train, val, test = split_dataset(self.make(10), (1.0, 0.0, 0.0), seed=0)
        assert (len(train), len(val), len(test)) == (10, 0, 0)

    def test_stratified_80_10_10(self):
        examples = self.make(100)
        train, val, test = split_dataset(examples, (0.8, 0.1, 0.1), seed=0)
        assert (len(train), len(val), len(test)) == (80, 10, 10)
        for part, expected in [(train, 40), (val, 5), (test, 5)]:
            per = {"fake": 0, "real": 0}
            for ex in part:
                per[ex.label] += 1
            assert per == {"fake": expected, "real": expected}

    def test_same_seed_same_membership(self):
        examples = self.make(50)
        a = split_dataset(examples, (0.8, 0.1, 0.1), seed=3)
        b = split_dataset(examples, (0.8, 0.1, 0.1), seed=3)
        assert all([x.id for x in pa] == [x.id for x in pb] for pa, pb in zip(a, b))

    def test_disjoint_and_complete(self):
        examples = self.make(37)
        parts = split_dataset(examples, (0.6, 0.2, 0.2), seed=1)
        ids = [ex.id for part in parts for ex in part]
        assert sorted(ids) == sorted(ex.id for ex in examples)
        assert len(set(ids)) == 37

    def test_small_class_error(self):
        examples = self.make(4, labels=("a", "a", "a", "b"))
        with pytest.raises(TaskError, match="fewer"):
            split_dataset(examples, (0.5, 0.25, 0.25), seed=0)

    def test_multilabel_stratified_by_toxic_flag(self):
        examples = [LabeledExample(f"e{i}", "t", frozenset(["abuse"] if i % 2 else []))
                    for i in range(20)]
        train, val, test = split_dataset(examples, (0.5, 0.25, 0.25), seed=0)
        toxic_in_train = sum(1 for ex in train if ex.label)
        assert toxic_in_train == 5


class TestRandomSearch:
    def test_single_trial_returns_its_config(self, base_ckpt, fixture_vocab,
                                             fixtures_dir):
        examples = read_labeled_jsonl(fixtures_dir / "binary_separable.jsonl")[:8]
        space = SearchSpace(lr_range=(1e-3, 1e-3), batch_sizes=(4,),
                            epochs_choices=(1,))
        best, log = random_search(base_ckpt, binary_spec(), examples, examples,
                                  fixture_vocab, space, trials=1, seed=0, max_len=12)
        assert len(log) == 1
        assert best.batch_size == 4 and best.epochs == 1

    def test_constant_objective_first_trial_wins(self, base_ckpt, fixture_vocab,
                                                 fixtures_dir, monkeypatch):
        import monoglot.heads as heads_mod

        examples = read_labeled_jsonl(fixtures_dir / "binary_separable.jsonl")[:8]

        real_finetune = heads_mod.finetune

        def constant_metric(model, train, val, vocab, cfg):
            tuned, history = real_finetune(model, train, val, vocab,
                                           FineTuneConfig(epochs=0))
            tuned.training_meta["best_val_metric"] = 0.5
            return tuned, history

        monkeypatch.setattr(heads_mod, "finetune", constant_metric)
        space = SearchSpace(lr_range=(1e-4, 1e-3), batch_sizes=(4, 8),
                            epochs_choices=(1, 2))
        best, log = random_search(base_ckpt, binary_spec(), examples, examples,
                                  fixture_vocab, space, trials=3, seed=0, max_len=12)
        assert all(r["val_metric"] == 0.5 for r in log)
        assert log[0]["config"]["lr"] == pytest.approx(best.lr)

    def test_reproducible_best_trial(self, base_ckpt, fixture_vocab, fixtures_dir):
        examples = read_labeled_jsonl(fixtures_dir / "binary_separable.jsonl")[:16]
        space = SearchSpace(lr_range=(5e-4, 5e-3), batch_sizes=(4, 8),
                            epochs_choices=(2, 3))
        kwargs = dict(trials=3, seed=11, max_len=12)
        b1, l1 = random_search(base_ckpt, binary_spec(), examples, examples,
                               fixture_vocab, space, **kwargs)
        b2, l2 = random_search(base_ckpt, binary_spec(), examples, examples,
                               fixture_vocab, space, **kwargs)
        assert b1 == b2
        assert l1 == l2
