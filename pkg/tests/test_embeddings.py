"""Lemma averaging, random fallback determinism, vector file round-trips."""

import numpy as np
import pytest

from m3gm.embeddings import (
    SynsetEmbeddings,
    WordVectorTable,
    average_synset,
    build_synset_embeddings,
    default_lemmas,
    load_synset_vectors,
    save_synset_vectors,
)
from m3gm.errors import DataFormatError, DimensionError, VocabularyError


def table(**kv):
    return WordVectorTable({k: np.array(v, dtype=float) for k, v in kv.items()})


def test_multiword_lemma_average_weights_repeated_tokens():
    # tokens: determine, find, find, out, ascertain -> divide by 5
    wv = table(
        determine=[5.0, 0.0],
        find=[0.0, 10.0],
        out=[1.0, 1.0],
        ascertain=[4.0, 4.0],
    )
    got = average_synset(["determine", "find", "find_out", "ascertain"], wv)
    want = (
        np.array([5.0, 0.0]) + 2 * np.array([0.0, 10.0])
        + np.array([1.0, 1.0]) + np.array([4.0, 4.0])
    ) / 5
    assert np.allclose(got, want)


def test_single_covered_lemma_is_exact():
    wv = table(cat=[1.0, 2.0, 3.0])
    assert np.array_equal(average_synset(["cat"], wv), [1.0, 2.0, 3.0])


def test_uncovered_tokens_do_not_count_toward_divisor():
    wv = table(find=[2.0])
    got = average_synset(["find_zzzunknown"], wv)
    assert np.array_equal(got, [2.0])


def test_all_out_of_vocabulary_is_uncovered():
    wv = table(cat=[1.0])
    assert average_synset(["dog", "wolf_pup"], wv) is None


def test_average_is_lemma_order_invariant():
    wv = table(a=[1.0, 0.0], b=[0.0, 1.0], c=[2.0, 2.0])
    x = average_synset(["a", "b_c"], wv)
    y = average_synset(["b_c", "a"], wv)
    assert np.allclose(x, y)


def test_case_insensitive_lookup():
    wv = table(Cat=[3.0])
    assert np.array_equal(wv.get("CAT"), [3.0])
    assert "cAt" in wv


def test_default_lemmas_strip_pos_and_sense():
    assert default_lemmas("find_out.v.01") == ["find_out"]
    assert default_lemmas("determine.v.01") == ["determine"]
    assert default_lemmas("plainword") == ["plainword"]


def test_build_mixes_averaged_and_random():
    wv = table(cat=[1.0, 1.0], dog=[2.0, 0.0])
    names = ["cat.n.01", "dog.n.01", "axolotl.n.01"]
    emb = build_synset_embeddings(names, wv, seed=7)
    assert emb.provenance == ["averaged", "averaged", "random"]
    assert np.array_equal(emb.vectors[0], [1.0, 1.0])
    assert emb.coverage() == {"averaged": 2, "random": 1, "loaded": 0}
    half = 0.5 / emb.dim
    assert np.abs(emb.vectors[2]).max() <= half
    assert np.abs(emb.vectors[2]).max() > 0


def test_build_is_deterministic_per_seed():
    names = [f"s{i}.n.01" for i in range(8)]
    a = build_synset_embeddings(names, None, dim=5, seed=3)
    b = build_synset_embeddings(names, None, dim=5, seed=3)
    c = build_synset_embeddings(names, None, dim=5, seed=4)
    assert np.array_equal(a.vectors, b.vectors)
    assert not np.array_equal(a.vectors, c.vectors)
    assert a.provenance == ["random"] * 8


def test_build_with_explicit_lemma_table():
    wv = table(feline=[4.0])
    emb = build_synset_embeddings(
        ["cat.n.01"], wv, lemmas={"cat.n.01": ["feline"]}
    )
    assert np.array_equal(emb.vectors[0], [4.0])
    assert emb.provenance == ["averaged"]


def test_build_dimension_conflicts():
    wv = table(cat=[1.0, 2.0])
    with pytest.raises(DimensionError):
        build_synset_embeddings(["cat.n.01"], wv, dim=300)
    with pytest.raises(DimensionError):
        build_synset_embeddings(["cat.n.01"], None)


def test_coverage_report_sums_to_total():
    emb = SynsetEmbeddings(np.ones((4, 2)), ["averaged", "random", "loaded", "random"])
    cov = emb.coverage()
    assert sum(cov.values()) == 4
    assert "4 synsets" in emb.coverage_report()


def test_synset_vector_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    names = ["a.n.01", "b.v.02", "c.n.03"]
    emb = SynsetEmbeddings(rng.normal(size=(3, 6)), ["loaded"] * 3)
    path = tmp_path / "syn.vec"
    save_synset_vectors(path, names, emb)
    back = load_synset_vectors(path, names)
    assert np.array_equal(back.vectors, emb.vectors)
    assert back.provenance == ["loaded"] * 3


def test_load_synset_vectors_errors(tmp_path):
    names = ["a.n.01", "b.n.01"]
    path = tmp_path / "syn.vec"
    path.write_text("a.n.01 1.0 2.0\nzz.n.09 3.0 4.0\n")
    with pytest.raises(VocabularyError):
        load_synset_vectors(path, names)
    path.write_text("a.n.01 1.0 2.0\n")
    with pytest.raises(VocabularyError, match="b.n.01"):
        load_synset_vectors(path, names)
    path.write_text("a.n.01 1.0 2.0\nb.n.01 3.0\n")
    with pytest.raises(DimensionError):
        load_synset_vectors(path, names)
    path.write_text("a.n.01 1.0 2.0\nb.n.01 3.0 4.0\n")
    with pytest.raises(DimensionError):
        load_synset_vectors(path, names, dim=300)
    path.write_text("a.n.01 1.0 2.0\na.n.01 9.0 9.0\n")
    with pytest.raises(DataFormatError):
        load_synset_vectors(path, names)


def test_word_vector_file_parsing(tmp_path):
    path = tmp_path / "words.vec"
    path.write_text("Cat 1.0 2.0\ndog 3.0 4.0\n")
    wv = WordVectorTable.from_file(path)
    assert len(wv) == 2 and wv.dim == 2
    assert np.array_equal(wv.get("cat"), [1.0, 2.0])


def test_word_vector_file_skips_word2vec_header(tmp_path):
    path = tmp_path / "words.vec"
    path.write_text("2 3\ncat 1.0 2.0 3.0\ndog 4.0 5.0 6.0\n")
    wv = WordVectorTable.from_file(path)
    assert len(wv) == 2 and wv.dim == 3


def test_word_vector_file_errors(tmp_path):
    path = tmp_path / "bad.vec"
    path.write_text("cat 1.0\njusttoken\n")
    with pytest.raises(DataFormatError, match="2"):
        WordVectorTable.from_file(path)
    path.write_text("cat 1.0\ndog oops\n")
    with pytest.raises(DataFormatError):
        WordVectorTable.from_file(path)
    path.write_text("cat 1.0\ndog 1.0 2.0\n")
    with pytest.raises(DimensionError):
        WordVectorTable.from_file(path)
