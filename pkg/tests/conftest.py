import os

import pytest

from scalestore.consistency import parse_spec
from scalestore.query import Catalog, parse_template
from scalestore.schema import parse_schema

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")
SCENARIOS = os.path.join(ROOT, "scenarios")

SOCIAL_TEMPLATES = ("friend_index", "friends_of_friends_index", "birthday_index")


def _read(*parts):
    with open(os.path.join(*parts), "r", encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def social_schema():
    return parse_schema(_read(FIXTURES, "social", "schema.json"))


@pytest.fixture(scope="session")
def social_spec():
    return parse_spec(_read(FIXTURES, "social", "spec.json"))


@pytest.fixture(scope="session")
def social_templates(social_schema):
    return {
        name: parse_template(_read(FIXTURES, "social", name + ".qt"),
                             social_schema, name=name)
        for name in SOCIAL_TEMPLATES
    }


@pytest.fixture()
def social_catalog(social_schema, social_templates):
    cat = Catalog(social_schema)
    for name in SOCIAL_TEMPLATES:
        cat.add(social_templates[name])
    return cat
