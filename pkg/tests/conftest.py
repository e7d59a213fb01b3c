import sys

import pytest

from shopdial.catalog import Catalog, Product
from shopdial.dialogue.conversation import Conversation, Speaker, Utterance
from shopdial.preference import Preference
from shopdial.search import Entry, Interest
from shopdial.synthetic import synthetic_catalog

W, U, O = Interest.WANTED, Interest.UNWANTED, Interest.OPTIONAL


def make_catalog(rows, domain="toy", category="tablet case"):
    """rows: (id, {aspect: value}) pairs, all in one category."""
    return Catalog(domain, [Product(pid, category, f"{category} {pid}", aspects) for pid, aspects in rows])


@pytest.fixture
def tablet_cases():
    return make_catalog([
        ("t1", {"Color": "blue", "Brand": "Moko", "Material": "TPU"}),
        ("t2", {"Color": "blue", "Brand": "Gocheaper", "Material": "leather"}),
        ("t3", {"Color": "red", "Brand": "Moko", "Material": "TPU"}),
        ("t4", {"Color": "red", "Brand": "Moko"}),
    ])


@pytest.fixture(scope="session")
def small_synthetic():
    return synthetic_catalog(200, seed=3)


LIPSTICK_TRANSCRIPT = [
    ("customer", "Hi there, I'm looking to buy a lipstick but I'm not quite sure where to start."),
    ("seller", "Hello! Let's start with the color you prefer. Popular ones are red, black or clear."),
    ("customer", "Oh, I think I'd like dynamite red."),
    ("seller", "Now let's talk about the brand. Some popular ones include Revlon, NYX Professional Makeup, "
               "and Maybelline New York. There is also a brand named Gocheaper. Any preference?"),
    ("customer", "Oh, I don't want the brand Gocheaper for sure. As for the other brands, I have no preference."),
    ("seller", "Lipsticks are also categorized by skin type: all, normal and dry. What's your skin type?"),
    ("customer", "I'm flexible with the skin type, I don't know mine."),
    ("seller", "Might I suggest Maybelline New York Color Sensational Red Lipstick Matte Lipstick, Dynamite Red?"),
    ("customer", "That sounds perfect. Thank you for your help!"),
]

LIPSTICK_PLAN = [
    Entry("color", "dynamite red", W),
    Entry("brand", "Gocheaper", U),
    Entry("skin type", "", O),
]


@pytest.fixture
def lipstick_conversation():
    pref = Preference("lipstick", tuple(LIPSTICK_PLAN), "L1")
    utterances = [Utterance(Speaker(s), t, i) for i, (s, t) in enumerate(LIPSTICK_TRANSCRIPT)]
    return Conversation("lipstick-1", "Beauty", pref, list(LIPSTICK_PLAN), "L1", utterances, 7)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)
