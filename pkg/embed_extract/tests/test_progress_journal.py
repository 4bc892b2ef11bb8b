import pytest

from embed_extract.journal import Journal, journal_path


def test_path_suffix():
    assert journal_path("x/items.arec") == "x/items.arec.journal"


def test_missing_file_is_empty(tmp_path):
    j = Journal(str(tmp_path / "none.journal"), "p/m")
    assert j.load() == set()


def test_record_and_reload(tmp_path):
    path = str(tmp_path / "out.journal")
    j = Journal(path, "p/m")
    j.open_for_append(fresh=True)
    j.record([0, 1, 2])
    j.record([7])
    j.close()
    assert Journal(path, "p/m").load() == {0, 1, 2, 7}


def test_append_keeps_existing_entries(tmp_path):
    path = str(tmp_path / "out.journal")
    j = Journal(path, "p/m")
    j.open_for_append(fresh=True)
    j.record([0, 1])
    j.close()
    j2 = Journal(path, "p/m")
    j2.open_for_append(fresh=False)
    j2.record([2])
    j2.close()
    assert Journal(path, "p/m").load() == {0, 1, 2}


def test_provider_mismatch_rejected(tmp_path):
    path = str(tmp_path / "out.journal")
    j = Journal(path, "p/m1")
    j.open_for_append(fresh=True)
    j.record([0])
    j.close()
    with pytest.raises(ValueError, match="written by provider 'p/m1'.*'p/m2'"):
        Journal(path, "p/m2").load()


def test_missing_header_rejected(tmp_path):
    path = tmp_path / "out.journal"
    path.write_text("0\n1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="missing provider header"):
        Journal(str(path), "p/m").load()


def test_torn_tail_ignored(tmp_path):
    # a crash can cut the final append short; that row is simply redone
    path = tmp_path / "out.journal"
    path.write_text("# provider=p/m\n0\n1\n4", encoding="utf-8")
    assert Journal(str(path), "p/m").load() == {0, 1, 4}
    path.write_text("# provider=p/m\n0\n1\n4x", encoding="utf-8")
    assert Journal(str(path), "p/m").load() == {0, 1}


def test_corrupt_middle_rejected(tmp_path):
    path = tmp_path / "out.journal"
    path.write_text("# provider=p/m\n0\nwhat\n2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 3: bad row index"):
        Journal(str(path), "p/m").load()
