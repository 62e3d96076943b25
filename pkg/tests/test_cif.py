import numpy as np
import pytest

from xtalsmith.cif import CifParseError, parse_cif, write_cif
from xtalsmith.core import reduced_formula

from conftest import FIXTURES, make_rocksalt

MINIMAL_PO = """data_po
_cell_length_a 3.35
_cell_length_b 3.35
_cell_length_c 3.35
_cell_angle_alpha 90
_cell_angle_beta 90
_cell_angle_gamma 90
loop_
 _atom_site_type_symbol
 _atom_site_fract_x
 _atom_site_fract_y
 _atom_site_fract_z
 Po 0 0 0
"""


def test_parse_minimal_po():
    s = parse_cif(MINIMAL_PO)
    assert s.species == ("Po",)
    assert s.lattice.parameters == pytest.approx((3.35, 3.35, 3.35, 90, 90, 90))


def test_roundtrip_fixed_point(rocksalt):
    text = write_cif(rocksalt)
    s2 = parse_cif(text)
    assert s2.species == rocksalt.species
    assert np.allclose(s2.frac_array, rocksalt.frac_array, atol=1e-6)
    assert np.allclose(
        s2.lattice.parameters, rocksalt.lattice.parameters, atol=1e-6
    )
    # a second pass reproduces the first byte for byte
    assert write_cif(s2) == write_cif(parse_cif(write_cif(s2)))


def test_nacl_fixture_composition_and_volume():
    s = parse_cif((FIXTURES / "golden_nacl.cif").read_text())
    assert s.n_sites == 8
    assert reduced_formula(s.composition) == "NaCl"
    assert s.volume == pytest.approx(5.64**3, abs=1e-6)


def test_golden_cif_bytes_stable():
    golden = (FIXTURES / "golden_nacl.cif").read_bytes()
    assert write_cif(make_rocksalt(), name="nacl").encode() == golden


def test_write_single_atom_has_one_site_row():
    s = parse_cif(MINIMAL_PO)
    text = write_cif(s)
    rows = [ln for ln in text.splitlines() if ln.startswith(" Po")]
    assert len(rows) == 1


def test_label_only_loop():
    text = MINIMAL_PO.replace("_atom_site_type_symbol", "_atom_site_label").replace(
        " Po 0 0 0", " Po1 0 0 0"
    )
    assert parse_cif(text).species == ("Po",)


def test_missing_cell_parameter_reports_line():
    bad = MINIMAL_PO.replace("_cell_length_b 3.35\n", "")
    with pytest.raises(CifParseError, match="_cell_length_b"):
        parse_cif(bad)


def test_empty_atom_loop_rejected():
    bad = MINIMAL_PO.replace(" Po 0 0 0\n", "")
    with pytest.raises(CifParseError, match="no atom sites"):
        parse_cif(bad)


def test_unknown_element_rejected_with_line():
    bad = MINIMAL_PO.replace(" Po 0 0 0", " Qq 0 0 0")
    with pytest.raises(CifParseError, match="line 13"):
        parse_cif(bad)


def test_malformed_number_rejected():
    bad = MINIMAL_PO.replace("_cell_length_a 3.35", "_cell_length_a abc")
    with pytest.raises(CifParseError, match="malformed number"):
        parse_cif(bad)


def test_uncertainty_suffix_needs_lenient():
    text = MINIMAL_PO.replace("_cell_length_a 3.35", "_cell_length_a 3.35(2)")
    with pytest.raises(CifParseError, match="uncertainty"):
        parse_cif(text)
    s = parse_cif(text, lenient=True)
    assert s.lattice.lengths[0] == pytest.approx(3.35)


def test_multiple_data_blocks_rejected():
    with pytest.raises(CifParseError, match="multiple data blocks"):
        parse_cif(MINIMAL_PO + "\ndata_second\n")


def test_coordinates_wrapped_on_parse():
    text = MINIMAL_PO.replace(" Po 0 0 0", " Po 1.25 -0.25 0")
    s = parse_cif(text)
    assert np.allclose(s.frac_array, [[0.25, 0.75, 0.0]])
