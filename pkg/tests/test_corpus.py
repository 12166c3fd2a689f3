import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import polymap as pm
from polymap.corpus import FRAMES_PER_UTTERANCE
from polymap.errors import FractionError, InventoryError, PolymapError, SynthSpecError

SMALL = dict(
    num_languages=2,
    feature_dim=5,
    phones_per_language=4,
    senones_per_phone=2,
    shared_phone_fraction=0.5,
    frames_per_senone=25,
)


class TestSynthSpec:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"num_languages": 0},
            {"feature_dim": 0},
            {"phones_per_language": -1},
            {"senones_per_phone": 0},
            {"frames_per_senone": 0},
            {"shared_phone_fraction": 1.2},
            {"shared_phone_fraction": -0.1},
            {"cluster_spread": 0.0},
        ],
    )
    def test_invalid_specs(self, overrides):
        with pytest.raises(SynthSpecError):
            pm.SynthSpec(**{**SMALL, **overrides})

    def test_unseeded_spec_refuses_to_generate(self):
        spec = pm.SynthSpec(**SMALL, seed=None)
        with pytest.raises(SynthSpecError):
            pm.generate_synthetic(spec)


class TestGenerator:
    def test_deterministic(self):
        a = pm.generate_synthetic(pm.SynthSpec(**SMALL, seed=5))
        b = pm.generate_synthetic(pm.SynthSpec(**SMALL, seed=5))
        for lang in a.languages:
            assert a.frames[lang].features.tobytes() == b.frames[lang].features.tobytes()
            assert (a.frames[lang].labels == b.frames[lang].labels).all()
            assert (a.g_tables[lang].table == b.g_tables[lang].table).all()
        assert a.phone_truth == b.phone_truth
        assert a.senone_truth == b.senone_truth

    def test_different_seeds_differ(self):
        a = pm.generate_synthetic(pm.SynthSpec(**SMALL, seed=5))
        b = pm.generate_synthetic(pm.SynthSpec(**SMALL, seed=6))
        assert a.frames["lang0"].features.tobytes() != b.frames["lang0"].features.tobytes()

    def test_shapes_and_inventories(self):
        spec = pm.SynthSpec(**SMALL, seed=1)
        corpus = pm.generate_synthetic(spec)
        total = spec.senones_per_language * spec.frames_per_senone
        for lang in corpus.languages:
            fs = corpus.frames[lang]
            assert len(fs) == total
            assert fs.feature_dim == spec.feature_dim
            assert fs.labels.min() >= 0
            assert fs.labels.max() < spec.senones_per_language
            # every phone owns exactly senones_per_phone senones
            sizes = np.bincount(corpus.g_tables[lang].table, minlength=spec.phones_per_language)
            assert (sizes == spec.senones_per_phone).all()
            # balanced frames per senone
            per_senone = np.bincount(fs.labels, minlength=spec.senones_per_language)
            assert (per_senone == spec.frames_per_senone).all()

    def test_utterance_grouping(self):
        corpus = pm.generate_synthetic(pm.SynthSpec(**SMALL, seed=2))
        utts = corpus.frames["lang0"].utterance_ids
        counts = np.bincount(utts)
        assert counts[:-1].max() == counts[:-1].min() == FRAMES_PER_UTTERANCE

    def test_no_sharing_means_empty_truth(self):
        spec = pm.SynthSpec(**{**SMALL, "shared_phone_fraction": 0.0}, seed=3)
        corpus = pm.generate_synthetic(spec)
        assert all(not pairs for pairs in corpus.phone_truth.values())
        assert all(not pairs for pairs in corpus.senone_truth.values())

    def test_full_sharing_means_total_truth(self):
        spec = pm.SynthSpec(**{**SMALL, "shared_phone_fraction": 1.0}, seed=3)
        corpus = pm.generate_synthetic(spec)
        pairs = corpus.phone_truth[("lang0", "lang1")]
        assert sorted(pairs) == list(range(spec.phones_per_language))
        senones = corpus.senone_truth[("lang0", "lang1")]
        assert sorted(senones) == list(range(spec.senones_per_language))

    def test_truth_consistent_with_collapse_tables(self):
        # mapping a senone across languages and collapsing must equal
        # collapsing first and mapping the phone
        spec = pm.SynthSpec(**SMALL, seed=9)
        corpus = pm.generate_synthetic(spec)
        g0, g1 = corpus.g_tables["lang0"], corpus.g_tables["lang1"]
        senones = corpus.senone_truth[("lang0", "lang1")]
        phones = corpus.phone_truth[("lang0", "lang1")]
        for s, t in senones.items():
            assert phones[g0(s)] == g1(t)

    def test_truth_is_inverse_symmetric(self):
        corpus = pm.generate_synthetic(pm.SynthSpec(**SMALL, seed=4))
        ab = corpus.phone_truth[("lang0", "lang1")]
        ba = corpus.phone_truth[("lang1", "lang0")]
        assert {v: k for k, v in ab.items()} == ba


def tiny_corpus(n_utts=100, langs=("a", "b"), frames_per_utt=2, n_labels=4):
    frames = {}
    for i, lang in enumerate(langs):
        n = n_utts * frames_per_utt
        rng = np.random.default_rng(i)
        frames[lang] = pm.FrameSet(
            lang,
            rng.normal(size=(n, 3)),
            rng.integers(0, n_labels, size=n),
            np.arange(n) // frames_per_utt,
        )
    return pm.MultiCorpus(
        languages=list(langs),
        feature_dim=3,
        senone_inventories={l: pm.LabelInventory(l, n_labels) for l in langs},
        phone_inventories={l: pm.LabelInventory(l, 2, "phone") for l in langs},
        g_tables={l: pm.SenoneToPhoneTable(l, [0, 0, 1, 1]) for l in langs},
        frames=frames,
    )


class TestSplit:
    def test_all_train(self):
        corpus = pm.split_corpus(tiny_corpus(), {"train": 1.0, "dev": 0.0, "test": 0.0}, seed=0)
        assert len(corpus.subset("a", "train")) == 200
        assert len(corpus.subset("a", "dev")) == 0

    def test_deterministic(self):
        a = pm.split_corpus(tiny_corpus(), {"train": 0.8, "dev": 0.1, "test": 0.1}, seed=3)
        b = pm.split_corpus(tiny_corpus(), {"train": 0.8, "dev": 0.1, "test": 0.1}, seed=3)
        assert a.splits == b.splits

    def test_80_10_10_sizes(self):
        corpus = pm.split_corpus(tiny_corpus(n_utts=100), {"train": 0.8, "dev": 0.1, "test": 0.1}, 1)
        for lang in corpus.languages:
            by_split = {
                s: sum(1 for v in corpus.splits[lang].values() if v == s)
                for s in ("train", "dev", "test")
            }
            assert abs(by_split["train"] - 80) <= 1
            assert abs(by_split["dev"] - 10) <= 1
            assert abs(by_split["test"] - 10) <= 1

    @given(
        fractions=st.tuples(st.floats(0, 1), st.floats(0, 1)).map(
            lambda t: {
                "train": t[0] * t[1],
                "dev": t[0] * (1 - t[1]),
                "test": 1 - t[0] * t[1] - t[0] * (1 - t[1]),
            }
        ),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=25, deadline=None)
    def test_disjoint_and_exhaustive(self, fractions, seed):
        if any(v < 0 for v in fractions.values()):
            return
        corpus = pm.split_corpus(tiny_corpus(n_utts=37), fractions, seed)
        for lang in corpus.languages:
            utts = set(np.unique(corpus.frames[lang].utterance_ids).tolist())
            assert set(corpus.splits[lang]) == utts
            pieces = [corpus.subset(lang, s) for s in ("train", "dev", "test")]
            assert sum(len(p) for p in pieces) == len(corpus.frames[lang])

    def test_split_is_by_utterance(self):
        corpus = pm.split_corpus(
            tiny_corpus(n_utts=20, frames_per_utt=5), {"train": 0.5, "dev": 0.25, "test": 0.25}, 7
        )
        train_utts = set(corpus.subset("a", "train").utterance_ids.tolist())
        dev_utts = set(corpus.subset("a", "dev").utterance_ids.tolist())
        assert not train_utts & dev_utts

    @pytest.mark.parametrize(
        "fractions",
        [
            {"train": 0.5, "dev": 0.5, "test": 0.5},
            {"train": -0.2, "dev": 0.6, "test": 0.6},
            {"train": 0.9, "dev": 0.1},
            {"train": 0.8, "dev": 0.1, "test": 0.1, "extra": 0.0},
        ],
    )
    def test_bad_fractions(self, fractions):
        with pytest.raises(FractionError):
            pm.split_corpus(tiny_corpus(), fractions, seed=0)

    def test_subset_before_split_fails(self):
        with pytest.raises(PolymapError):
            tiny_corpus().subset("a", "train")


class TestPooling:
    def test_no_sources_returns_target_unchanged(self):
        target = tiny_corpus().frames["a"]
        assert pm.pool_and_relabel([], target) is target

    def test_counts_and_ranges(self):
        rng = np.random.default_rng(0)
        target = pm.FrameSet("tgt", rng.normal(size=(50, 3)), rng.integers(0, 5, 50), np.arange(50))
        tgt_inv = pm.LabelInventory("tgt", 5)
        sources = []
        for i, lang in enumerate(("s1", "s2")):
            fs = pm.FrameSet(lang, rng.normal(size=(100, 3)), rng.integers(0, 4, 100), np.arange(100))
            table = rng.integers(0, 5, size=4)
            sources.append((fs, pm.LabelMap(pm.LabelInventory(lang, 4), tgt_inv, table, "manual")))
        pooled = pm.pool_and_relabel(sources, target)
        assert len(pooled) == 250
        assert pooled.language == "tgt"
        assert pooled.labels.max() < 5

    def test_identity_maps_equal_concatenation(self):
        rng = np.random.default_rng(1)
        inv = pm.LabelInventory("tgt", 4)
        mk = lambda: pm.FrameSet("tgt", rng.normal(size=(30, 3)), rng.integers(0, 4, 30), np.arange(30))
        a, b, target = mk(), mk(), mk()
        pooled = pm.pool_and_relabel(
            [(a, pm.identity_map(inv)), (b, pm.identity_map(inv))], target
        )
        direct = pm.FrameSet.concat([a, b, target])
        assert pooled.features.tobytes() == direct.features.tobytes()
        assert (pooled.labels == direct.labels).all()

    def test_features_byte_identical(self):
        rng = np.random.default_rng(2)
        inv = pm.LabelInventory("tgt", 3)
        src = pm.FrameSet("src", rng.normal(size=(20, 3)), rng.integers(0, 3, 20), np.arange(20))
        target = pm.FrameSet("tgt", rng.normal(size=(10, 3)), rng.integers(0, 3, 10), np.arange(10))
        label_map = pm.LabelMap(pm.LabelInventory("src", 3), inv, [2, 0, 1], "manual")
        pooled = pm.pool_and_relabel([(src, label_map)], target)
        assert pooled.features[:20].tobytes() == src.features.tobytes()
        assert pooled.features[20:].tobytes() == target.features.tobytes()

    def test_wrong_target_inventory(self):
        rng = np.random.default_rng(3)
        src = pm.FrameSet("src", rng.normal(size=(5, 3)), rng.integers(0, 3, 5), np.arange(5))
        target = pm.FrameSet("tgt", rng.normal(size=(5, 3)), rng.integers(0, 3, 5), np.arange(5))
        wrong = pm.LabelMap(pm.LabelInventory("src", 3), pm.LabelInventory("other", 3), [0, 1, 2], "manual")
        with pytest.raises(InventoryError):
            pm.pool_and_relabel([(src, wrong)], target)


class TestCorpusFiles:
    @pytest.mark.parametrize("suffix", [".npz", ".txt"])
    def test_round_trip(self, tmp_path, suffix):
        spec = pm.SynthSpec(**SMALL, seed=8)
        corpus = pm.split_corpus(
            pm.generate_synthetic(spec), {"train": 0.6, "dev": 0.2, "test": 0.2}, seed=1
        )
        path = tmp_path / f"corpus{suffix}"
        pm.save_corpus(corpus, path)
        loaded = pm.load_corpus(path)
        assert loaded.languages == corpus.languages
        assert loaded.feature_dim == corpus.feature_dim
        for lang in corpus.languages:
            assert loaded.frames[lang].features.tobytes() == corpus.frames[lang].features.tobytes()
            assert (loaded.frames[lang].labels == corpus.frames[lang].labels).all()
            assert (loaded.frames[lang].utterance_ids == corpus.frames[lang].utterance_ids).all()
            assert (loaded.g_tables[lang].table == corpus.g_tables[lang].table).all()
            assert loaded.g_tables[lang].num_phones == corpus.g_tables[lang].num_phones
            assert loaded.splits[lang] == corpus.splits[lang]
            assert loaded.senone_inventories[lang] == corpus.senone_inventories[lang]
        assert loaded.phone_truth == corpus.phone_truth
        assert loaded.senone_truth == corpus.senone_truth

    def test_binary_save_is_byte_deterministic(self, tmp_path):
        corpus = pm.generate_synthetic(pm.SynthSpec(**SMALL, seed=8))
        pm.save_corpus(corpus, tmp_path / "a.npz")
        pm.save_corpus(corpus, tmp_path / "b.npz")
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()

    def test_ground_truth_map_files(self, tmp_path):
        spec = pm.SynthSpec(**{**SMALL, "shared_phone_fraction": 1.0}, seed=3)
        corpus = pm.generate_synthetic(spec)
        written = pm.save_ground_truth_maps(corpus, tmp_path)
        assert len(written) == 4  # phone + senone files for both directions
        # a fully shared corpus's truth file is a complete, loadable manual map
        phone_file = tmp_path / "truth_phone_lang0_to_lang1.txt"
        loaded = pm.load_manual_map(
            phone_file, corpus.phone_inventories["lang0"], corpus.phone_inventories["lang1"]
        )
        assert {s: int(t) for s, t in enumerate(loaded.table)} == corpus.phone_truth[("lang0", "lang1")]


class TestRecovery:
    def test_phone_map_recovers_ground_truth(self):
        spec = pm.SynthSpec(
            num_languages=2, feature_dim=8, phones_per_language=5, senones_per_phone=2,
            shared_phone_fraction=1.0, frames_per_senone=60, cluster_spread=0.05, seed=12,
        )
        corpus = pm.generate_synthetic(spec)
        net = pm.init_network([8, 24, 10], seed=1)
        net, _ = pm.train(net, corpus.frames["lang0"], pm.TrainConfig(epochs=8, shuffle_seed=2))
        counts = pm.accumulate_confusion(
            net, corpus.frames["lang1"],
            corpus.senone_inventories["lang0"], corpus.senone_inventories["lang1"],
        )
        recovered = pm.phone_map(counts, corpus.g_tables["lang1"], corpus.g_tables["lang0"])
        truth = corpus.phone_truth[("lang1", "lang0")]
        assert {s: int(t) for s, t in enumerate(recovered.table)} == truth
