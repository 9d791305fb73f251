from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from partcraft.document import (
    DocumentError,
    PartSpec,
    RichPromptDocument,
    build_part_prompt,
    document_to_dict,
    parse_document,
    serialize_document,
)

FLAMINGO = (
    '{"base":"a photo of a flamingo","object":"flamingo",'
    '"parts":[{"name":"beak","footnote":"a pelicans beak"}]}'
)


def test_parse_footnote_document():
    doc = parse_document(FLAMINGO)
    assert doc.base_prompt == "a photo of a flamingo"
    assert doc.object_token == "flamingo"
    assert len(doc.parts) == 1
    assert doc.parts[0].name == "beak"
    assert doc.parts[0].footnote == "a pelicans beak"
    assert doc.parts[0].color is None
    assert doc.parts[0].size == 1.0


def test_parse_accepts_bytes():
    doc = parse_document(FLAMINGO.encode("utf-8"))
    assert doc.parts[0].name == "beak"


def test_empty_parts_document_is_valid():
    doc = parse_document('{"base":"a cat","object":"cat","parts":[]}')
    assert doc.parts == ()


def test_parts_field_may_be_omitted():
    doc = parse_document('{"base":"a cat","object":"cat"}')
    assert doc.parts == ()


def test_malformed_json_reports_byte_offset():
    with pytest.raises(DocumentError, match=r"malformed JSON at byte offset \d+"):
        parse_document('{"base": "a cat", "object": ')


def test_duplicate_part_names_listed():
    doc = {
        "base": "a bird",
        "object": "bird",
        "parts": [{"name": "beak"}, {"name": "wing"}, {"name": " Beak "}],
    }
    with pytest.raises(DocumentError, match=r"duplicate part names: \[' Beak '\]"):
        parse_document(json.dumps(doc))


def test_missing_object_token():
    with pytest.raises(DocumentError, match="object token missing"):
        parse_document('{"base":"a cat","parts":[]}')


def test_object_token_must_occur_in_base():
    with pytest.raises(DocumentError, match="does not occur"):
        RichPromptDocument(base_prompt="a cat", object_token="dog")


def test_unknown_top_level_field_rejected():
    with pytest.raises(DocumentError, match=r"unknown document fields \['extra'\]"):
        parse_document('{"base":"a cat","object":"cat","extra":1}')


def test_unknown_part_attribute_names_index():
    doc = {"base": "a cat", "object": "cat", "parts": [{"name": "ear", "font": 3}]}
    with pytest.raises(DocumentError, match=r"parts\[0\]: unknown attributes \['font'\]"):
        parse_document(json.dumps(doc))


def test_part_missing_name():
    doc = {"base": "a cat", "object": "cat", "parts": [{"footnote": "x"}]}
    with pytest.raises(DocumentError, match=r"parts\[0\]: missing name"):
        parse_document(json.dumps(doc))


@pytest.mark.parametrize("color", [[256, 0, 0], [-1, 0, 0], [0, 0], [0, 0, 0, 0], [0.5, 0, 0]])
def test_color_validation(color):
    with pytest.raises(DocumentError):
        parse_document(
            json.dumps(
                {"base": "a cat", "object": "cat", "parts": [{"name": "ear", "color": color}]}
            )
        )


@pytest.mark.parametrize("size", [0, -1, -0.5])
def test_size_must_be_positive(size):
    with pytest.raises(DocumentError, match="size must be > 0"):
        PartSpec(name="ear", size=size)


def test_blank_part_name_rejected():
    with pytest.raises(DocumentError, match="nonempty"):
        PartSpec(name="   ")


def test_roundtrip_identity():
    doc = parse_document(FLAMINGO)
    assert parse_document(serialize_document(doc)) == doc


def test_serialized_form_is_canonical():
    doc = RichPromptDocument(
        base_prompt="a photo of a flamingo",
        object_token="flamingo",
        parts=(PartSpec(name="beak", footnote="a pelicans beak"),),
    )
    assert serialize_document(doc) == FLAMINGO


def test_defaults_elided_from_serialization():
    doc = RichPromptDocument(
        base_prompt="a cat",
        object_token="cat",
        parts=(PartSpec(name="ear", size=1.0),),
    )
    assert document_to_dict(doc)["parts"] == [{"name": "ear"}]


def test_integral_size_serializes_as_int():
    doc = RichPromptDocument(
        base_prompt="a cat",
        object_token="cat",
        parts=(PartSpec(name="ear", size=2.0),),
    )
    assert '"size":2}' in serialize_document(doc)


def test_fractional_size_preserved():
    doc = RichPromptDocument(
        base_prompt="a cat",
        object_token="cat",
        parts=(PartSpec(name="ear", size=0.5),),
    )
    assert parse_document(serialize_document(doc)).parts[0].size == 0.5


def test_object_span():
    doc = parse_document(FLAMINGO)
    start, end = doc.object_span
    assert doc.base_prompt[start:end] == "flamingo"


def test_build_part_prompt_order():
    doc = RichPromptDocument(
        base_prompt="a photo of a bird",
        object_token="bird",
        parts=(PartSpec(name="beak"), PartSpec(name="crown"), PartSpec(name="wings")),
    )
    assert build_part_prompt(doc) == "beak crown wings"


def test_build_part_prompt_singleton():
    doc = RichPromptDocument(
        base_prompt="a photo of a bird",
        object_token="bird",
        parts=(PartSpec(name="beak"),),
    )
    assert build_part_prompt(doc) == "beak"


def test_build_part_prompt_preserves_declaration_order():
    mk = lambda names: RichPromptDocument(
        base_prompt="a photo of a bird",
        object_token="bird",
        parts=tuple(PartSpec(name=n) for n in names),
    )
    assert build_part_prompt(mk(["a", "b"])) == "a b"
    assert build_part_prompt(mk(["b", "a"])) == "b a"


def test_build_part_prompt_requires_parts():
    doc = RichPromptDocument(base_prompt="a cat", object_token="cat")
    with pytest.raises(DocumentError, match="no parts"):
        build_part_prompt(doc)


_names = st.text(
    alphabet=st.characters(whitelist_categories=("Ll",), max_codepoint=0x017F),
    min_size=1,
    max_size=8,
).filter(lambda s: s.strip())


@st.composite
def documents(draw):
    names = draw(st.lists(_names, min_size=0, max_size=4, unique_by=lambda n: n.strip().lower()))
    parts = []
    for name in names:
        parts.append(
            PartSpec(
                name=name,
                footnote=draw(st.one_of(st.none(), _names)),
                color=draw(
                    st.one_of(
                        st.none(),
                        st.tuples(
                            st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)
                        ),
                    )
                ),
                style=draw(st.one_of(st.none(), _names)),
                size=draw(st.one_of(st.just(1.0), st.floats(0.25, 4.0))),
            )
        )
    token = draw(_names)
    return RichPromptDocument(
        base_prompt=f"a photo of a {token}", object_token=token, parts=tuple(parts)
    )


@given(documents())
def test_roundtrip_property(doc):
    assert parse_document(serialize_document(doc)) == doc
