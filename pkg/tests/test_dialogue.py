import json
import random

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from shopdial.dialogue.backends import (BackendConfigError, BackendError, Generation, RateLimited, RemoteBackend,
                                        TemplateBackend, TurnRequest, make_backend)
from shopdial.dialogue.conversation import (Conversation, Speaker, TranscriptError, Utterance,
                                            conversation_problems, format_transcript, parse_transcript)
from shopdial.dialogue.generate import (DialogueConfig, EpisodeFailed, generate_interactive, generate_single_pass,
                                        plan_hints)
from shopdial.dialogue.prompts import PromptError, PromptTemplate, load_template, render_prompt
from shopdial.dialogue.tracker import (DialogueState, FunctionCallRefiner, TrackerConfig, track_conversation,
                                       update_state)
from shopdial.planner import EpisodePlanner, plan_dialogue
from shopdial.preference import Preference, sample_preference, sample_target
from shopdial.search import Entry, Interest

from conftest import LIPSTICK_PLAN, make_catalog

W, U, O = Interest.WANTED, Interest.UNWANTED, Interest.OPTIONAL


def cust(text, i=0):
    return Utterance(Speaker.CUSTOMER, text, i)


# prompts

LIPSTICK_PREF = Preference("lipstick", tuple(LIPSTICK_PLAN), "L1")


def test_single_pass_prompt_has_category_and_blocks():
    product = make_catalog([("L1", {"color": "dynamite red", "brand": "x"})], category="lipstick")["L1"]
    text = render_prompt(load_template("single_pass"),
                         {"preference": LIPSTICK_PREF, "plan": LIPSTICK_PLAN, "hints": {}, "product": product})
    assert "wants to buy lipstick" in text
    assert "Aspect: brand, Value: Gocheaper;" in text
    assert "Aspect: color, Value: dynamite red;" in text
    assert "Aspect: skin type;" in text
    assert "Typical Values" not in text
    assert product.title in text


def test_hint_line_lists_all_values():
    plan = [Entry("SSD size", "", O)]
    product = make_catalog([("p", {"SSD size": "1TB", "b": "x"})], category="laptop")["p"]
    text = render_prompt(load_template("single_pass"),
                         {"category": "laptop", "plan": plan, "product": product,
                          "hints": {"SSD size": ["256GB", "512GB", "1TB"]}})
    lines = [l for l in text.splitlines() if "Typical Values" in l]
    assert lines == ["Aspect: SSD size, Typical Values: 256GB, 512GB, 1TB;"]


def test_blocks_follow_plan_order():
    plan = [Entry("b", "2", W), Entry("a", "1", W)]
    product = make_catalog([("p", {"a": "1", "b": "2"})])["p"]
    text = render_prompt(load_template("single_pass"), {"category": "x", "plan": plan, "product": product,
                                                         "hints": {"a": ["1"], "b": ["2"]}})
    assert text.index("Aspect: b, Value: 2") < text.index("Aspect: a, Value: 1")
    assert text.index("Aspect: b, Typical") < text.index("Aspect: a, Typical")


def test_missing_placeholder_is_named():
    with pytest.raises(PromptError, match="ProductTitle"):
        render_prompt(load_template("single_pass"), {"preference": LIPSTICK_PREF, "plan": LIPSTICK_PLAN, "hints": {}})
    with pytest.raises(PromptError, match="Value"):
        render_prompt(PromptTemplate("t", "seller", "{{ Aspect }} {{ Value }}"), {"Aspect": "color"})


def test_rendering_is_deterministic():
    product = make_catalog([("L1", {"color": "dynamite red", "brand": "x"})], category="lipstick")["L1"]
    ctx = {"preference": LIPSTICK_PREF, "plan": LIPSTICK_PLAN, "hints": {"color": ["red"]}, "product": product}
    assert render_prompt(load_template("single_pass"), ctx) == render_prompt(load_template("single_pass"), ctx)


@pytest.mark.parametrize("name", ["seller", "customer", "tracker"])
def test_turn_templates_render(name):
    state = DialogueState.start(LIPSTICK_PLAN)
    text = render_prompt(load_template(name), {"preference": LIPSTICK_PREF, "conversation_history": [cust("hi")],
                                               "state": state, "hints": {"color": ["red"]},
                                               "utterance": cust("I like red")})
    assert text.strip()


# transcript format

def test_parse_transcript_tolerates_case_and_blank_lines():
    us = parse_transcript("Customer: hi\n\nSELLER :  hello there \ncustomer:bye\n")
    assert [(u.speaker, u.text, u.turn_index) for u in us] == [
        (Speaker.CUSTOMER, "hi", 0), (Speaker.SELLER, "hello there", 1), (Speaker.CUSTOMER, "bye", 2)]


@pytest.mark.parametrize("text", ["customer: hi\n(smiles)\nseller: ok", "", "seller:\n", "Customer - hi"])
def test_parse_transcript_rejects_other_lines(text):
    with pytest.raises(TranscriptError):
        parse_transcript(text)


def test_format_parse_round_trip():
    us = [cust("a", 0), Utterance(Speaker.SELLER, "b", 1)]
    assert parse_transcript(format_transcript(us)) == us


def test_conversation_problems(lipstick_conversation):
    assert conversation_problems(lipstick_conversation, ["L1"]) == []
    assert conversation_problems(lipstick_conversation, ["L2"])
    bad = Conversation("x", "d", LIPSTICK_PREF, [], None, [Utterance(Speaker.SELLER, "hi", 0)])
    assert "turn 0 is not the customer" in conversation_problems(bad)
    late = Conversation("x", "d", LIPSTICK_PREF, [], "L1",
                        [Utterance(Speaker.CUSTOMER if i % 2 == 0 else Speaker.SELLER, "t", i) for i in range(7)], 1)
    assert any("after the recommendation" in p for p in conversation_problems(late))


# tracker

def test_value_only_wanted_mention_moves():
    state = DialogueState.start([Entry("color", "dynamite red", W)])
    state = update_state(state, cust("I'd prefer dynamite red"))
    assert state.mentioned_by(W) == [Entry("color", "dynamite red", W)] and state.done


def test_optional_needs_hedge_and_aspect():
    state = DialogueState.start([Entry("size", "", O)])
    assert update_state(state, cust("What sizes are there?")) == state
    state = update_state(state, cust("I'm flexible with the size"))
    assert state.mentioned_by(O) == [Entry("size", "", O)]


def test_no_tracked_aspect_leaves_state_unchanged():
    state = DialogueState.start(LIPSTICK_PLAN)
    assert update_state(state, cust("Hello, how are you today?")) == state


def test_seller_turns_do_not_move():
    state = DialogueState.start(LIPSTICK_PLAN)
    assert update_state(state, Utterance(Speaker.SELLER, "Do you like dynamite red color?", 1)) == state


def test_ambiguous_value_without_aspect_stays():
    state = DialogueState.start([Entry("case color", "red", W), Entry("strap color", "red", U)])
    assert update_state(state, cust("red please")) == state
    state = update_state(state, cust("red for the case color"))
    assert state.mentioned == (Entry("case color", "red", W),)


def test_aliases():
    state = DialogueState.start([Entry("finish type", "", O)])
    config = TrackerConfig(aliases={"finish type": ["finish"]})
    state = update_state(state, cust("no specific preference on the finish"), config=config)
    assert state.done


def test_lipstick_transcript_tracking(lipstick_conversation):
    state = track_conversation(lipstick_conversation.utterances, LIPSTICK_PLAN)
    assert Entry("color", "dynamite red", W) in state.mentioned_by(W)
    assert Entry("brand", "Gocheaper", U) in state.mentioned_by(U)


def test_refiner_moves_entries_only_forward():
    class Reply:
        deterministic = True

        def generate(self, messages, params=None, request=None):
            return Generation('args: {"mentioned_optional_features": {"skin type": ""},'
                              ' "mentioned_positive_features": {"color": "pink"}}', {})

    state = DialogueState.start(LIPSTICK_PLAN)
    state = update_state(state, cust("whatever"), refiner=FunctionCallRefiner(Reply()))
    assert state.mentioned == (Entry("skin type", "", O),)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from([
    "I'd like dynamite red", "no Gocheaper brand please", "I'm flexible about the skin type", "hello",
    "red", "brand", "I don't care", "what about the color?"]), max_size=8))
def test_update_is_move_only_and_idempotent(texts):
    state = DialogueState.start(LIPSTICK_PLAN)
    for i, t in enumerate(texts):
        u = cust(t, i)
        nxt = update_state(state, u)
        assert set(state.mentioned) <= set(nxt.mentioned)
        assert sorted(nxt.remaining + nxt.mentioned) == sorted(LIPSTICK_PLAN)
        assert not set(nxt.remaining) & set(nxt.mentioned)
        assert update_state(nxt, u) == nxt
        state = nxt


# backends

def test_template_seller_question_with_hints():
    backend = TemplateBackend()
    text = backend.generate([{"role": "user", "content": "x"}], None,
                            TurnRequest("ask", "tablet case", [Entry("Color", "", O)],
                                        {"Color": ["blue", "red", "green"]})).text
    assert text == "Do you have a preference for Color? Popular ones are blue, red or green."


def test_empty_message_list():
    with pytest.raises(ValueError):
        TemplateBackend().generate([], None, TurnRequest("open", "x"))


def _ok(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_remote_retries_rate_limit():
    calls = []

    def handler(request):
        calls.append(json.loads(request.content))
        return httpx.Response(429, headers={"retry-after": "0"}) if len(calls) == 1 else _ok("customer: hi")

    slept = []
    backend = RemoteBackend("https://api.invalid/v1/chat", "k", "m1", transport=httpx.MockTransport(handler),
                            sleep=slept.append)
    gen = backend.generate([{"role": "user", "content": "go"}], {"seed": 7, "max_length": 50})
    assert gen.text == "customer: hi"
    assert gen.meta["attempts"] == 2 and gen.meta["model"] == "m1" and gen.meta["seed"] == 7
    assert "latency_s" in gen.meta
    assert calls[0]["messages"] == [{"role": "user", "content": "go"}] and calls[0]["max_tokens"] == 50
    assert len(slept) == 1


@pytest.mark.parametrize("status", [500, 503])
def test_remote_gives_up_after_max_retries(status):
    backend = RemoteBackend("https://api.invalid", "k", transport=httpx.MockTransport(lambda r: httpx.Response(status)),
                            max_retries=2, sleep=lambda s: None)
    with pytest.raises(BackendError):
        backend.generate([{"role": "user", "content": "go"}])


def test_remote_client_errors_are_not_retried():
    n = []

    def handler(request):
        n.append(1)
        return httpx.Response(400, text="bad")

    backend = RemoteBackend("https://api.invalid", "k", transport=httpx.MockTransport(handler), sleep=lambda s: None)
    with pytest.raises(BackendError):
        backend.generate([{"role": "user", "content": "go"}])
    assert len(n) == 1


def test_remote_transport_errors_are_distinct():
    def boom(request):
        raise httpx.ConnectError("refused")

    backend = RemoteBackend("https://api.invalid", "k", transport=httpx.MockTransport(boom), max_retries=0,
                            sleep=lambda s: None)
    with pytest.raises(BackendError) as info:
        backend.generate([{"role": "user", "content": "go"}])
    assert info.value.retryable and not isinstance(info.value, RateLimited)


def test_remote_needs_credential():
    with pytest.raises(BackendConfigError):
        make_backend("remote", env={"SHOPDIAL_API_URL": "https://api.invalid"})
    with pytest.raises(BackendConfigError):
        make_backend("remote", env={})


# generation

def _episode(catalog, seed):
    rng = random.Random(seed)
    pref = sample_preference(sample_target(catalog, rng), catalog, rng)
    return pref, rng


def test_single_pass_template_covers_plan_once(small_synthetic):
    for seed in range(25):
        pref, rng = _episode(small_synthetic, seed)
        plan = plan_dialogue(small_synthetic, pref)
        product = small_synthetic[plan.final_candidates[0]]
        conv = generate_single_pass(pref, plan.plan_history, product, plan_hints(plan, small_synthetic),
                                    TemplateBackend(), config=DialogueConfig(record_timing=False))
        assert conversation_problems(conv, plan.final_candidates) == []
        assert track_conversation(conv.utterances, plan.plan_history).done
        again = generate_single_pass(pref, plan.plan_history, product, plan_hints(plan, small_synthetic),
                                     TemplateBackend(), config=DialogueConfig(record_timing=False))
        assert again.to_record() == conv.to_record()


def test_single_pass_empty_plan():
    catalog = make_catalog([("a", {"c": "1", "d": "2"})])
    pref = Preference("tablet case", (Entry("c", "1", W),), "a")
    conv = generate_single_pass(pref, [], catalog["a"], {}, TemplateBackend())
    assert [u.speaker for u in conv.utterances][:2] == [Speaker.CUSTOMER, Speaker.SELLER]
    assert conv.recommendation_turn == 1
    assert len(conv.utterances) == 4


def test_single_pass_unparseable_output_keeps_raw_text(tablet_cases):
    class Chatty:
        def generate(self, messages, params=None, request=None):
            return Generation("Sure! Here is the conversation:\ncustomer: hi", {"attempts": 1})

    pref = Preference("tablet case", (Entry("Color", "blue", W),), "t1")
    with pytest.raises(EpisodeFailed) as info:
        generate_single_pass(pref, [], tablet_cases["t1"], {}, Chatty())
    assert info.value.reason == "unparseable output"
    assert info.value.meta["raw_output"].startswith("Sure!")


def test_interactive_template_alternates_and_covers(small_synthetic):
    for seed in range(25):
        pref, rng = _episode(small_synthetic, seed)
        planner = EpisodePlanner(small_synthetic, pref)
        conv = generate_interactive(pref, planner, TemplateBackend(), small_synthetic, rng,
                                    config=DialogueConfig(record_timing=False))
        assert conversation_problems(conv, planner.candidates) == []
        state = track_conversation(conv.utterances, conv.plan_history)
        assert state.done and sorted(state.mentioned) == sorted(conv.plan_history)
        assert conv.generation_meta["tracker"]["remaining_wanted"] == []
        seller_turns = [u for u in conv.utterances if u.speaker is Speaker.SELLER]
        assert all(u.text.count("preference for") <= 2 for u in seller_turns)


def test_interactive_singleton_recommends_it():
    catalog = make_catalog([("a", {"c": "1", "d": "2"})])
    pref = Preference("tablet case", (Entry("c", "1", W),), "a")
    conv = generate_interactive(pref, EpisodePlanner(catalog, pref), TemplateBackend(), catalog, random.Random(0))
    assert conv.recommended_product_id == "a"
    assert catalog["a"].title in conv.utterances[conv.recommendation_turn].text


def test_interactive_deadlock_is_reported(small_synthetic):
    class Stubborn(TemplateBackend):
        def answer(self, steps):
            return "Hmm, let me think about it."

    pref, rng = _episode(small_synthetic, 1)
    planner = EpisodePlanner(small_synthetic, pref)
    with pytest.raises(EpisodeFailed) as info:
        generate_interactive(pref, planner, Stubborn(), small_synthetic, rng)
    assert info.value.reason == "tracker deadlock"
    assert len(info.value.utterances) == 1 + 4


def test_interactive_with_remote_style_backend_records_meta(small_synthetic):
    template = TemplateBackend()

    def handler(request):
        return _ok("ok")

    pref, rng = _episode(small_synthetic, 2)
    remote = RemoteBackend("https://api.invalid", "k", "m", transport=httpx.MockTransport(handler))

    class Scripted:
        deterministic = False

        def generate(self, messages, params=None, request=None):
            remote.generate(messages, params)
            return template.generate(messages, params, request)

    conv = generate_interactive(pref, EpisodePlanner(small_synthetic, pref), Scripted(), small_synthetic, rng)
    assert "generation_time_s" in conv.generation_meta
