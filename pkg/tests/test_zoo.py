import pytest

from src.backend import zoo_listing, zoo_run
from src.errors import NotFound
from src.zoo import resolve, zoo, zoo_directory, zoo_entry

RING_MEMBERS = ["power-series", "hypersurface-d2", "hypersurface-d3", "unipotent-b1", "unipotent-b2",
                "unipotent-b3", "local-deformation", "noncomplete-intersection", "diamond-example"]
PATCH_MEMBERS = ["patch-constant", "patch-two-term", "patch-rank-two", "patch-no-recurrence"]


def test_members_are_sorted(config):
    names = [e.name for e in zoo(config)]
    assert names == sorted(RING_MEMBERS + PATCH_MEMBERS)


def test_every_member_has_provenance(config):
    for entry in zoo(config):
        assert entry.version >= 1
        assert entry.description
        assert entry.provenance


def test_unknown_member(config):
    with pytest.raises(NotFound) as caught:
        zoo_entry("hypersurface-d9", config)
    assert "hypersurface-d2" in caught.value.details["members"]


def test_resolve_reference_and_path(config):
    by_name = resolve("zoo:hypersurface-d2", config)
    by_path = resolve(zoo_entry("hypersurface-d2", config).path, config)
    assert by_name.name == by_path.name == "hypersurface-d2"
    assert by_name.expect["phi_length"] == 2


def test_zoo_path_from_config(config, tmp_path):
    (tmp_path / "only.toml").write_text('name = "only"\n[ring]\nvariables = ["t"]\n', encoding="utf-8")
    custom = config.overridden(zoo_path=str(tmp_path))
    assert zoo_directory(custom) == str(tmp_path)
    assert [e.name for e in zoo(custom)] == ["only"]


def test_listing(config):
    listing = zoo_listing(config)
    assert len(listing["members"]) == len(RING_MEMBERS) + len(PATCH_MEMBERS)
    assert set(listing["members"][0]) == {"name", "version", "description", "provenance"}


@pytest.mark.parametrize("name", RING_MEMBERS + PATCH_MEMBERS)
def test_member_matches_recorded_invariants(config, name):
    result, _ = zoo_run(name, config, seed=0)
    if "expected_error" in result:
        assert result["expected_error"]["kind"] == "no_recurring_class"
    else:
        assert all(check["holds"] for check in result["expectations"].values())
