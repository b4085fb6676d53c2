import random

import pytest

from graffiti.model import GraffitiObject
from graffiti.sim import (
    INSTAGRAM_REPLY,
    NOT_APPLICABLE,
    QUOTE_TWEET,
    X_REPLY,
    AnnounceCheckParams,
    classify_reply,
    resolve_membership,
    run_announce_completeness_check,
    run_crosspost_scenario,
    run_membership_scenario,
    run_reply_matrix_scenario,
)
from graffiti.targets import TARGETS

POST_URL = "graffiti:remote:pod.example.com/123"
REPLIER = "https://theia.example.com"


def reply_obj(channels):
    return GraffitiObject(
        value={"content": "omg yess", "inReplyTo": POST_URL},
        url="graffiti:remote:pod.example.com/456",
        actor=REPLIER,
        channels=channels,
    )


class TestClassifyReply:
    def test_both_channels_is_x_reply(self):
        assert classify_reply(reply_obj([POST_URL, REPLIER]), POST_URL, REPLIER) == X_REPLY

    def test_post_channel_only_is_instagram_reply(self):
        assert classify_reply(reply_obj([POST_URL]), POST_URL, REPLIER) == INSTAGRAM_REPLY

    def test_replier_channel_only_is_quote_tweet(self):
        assert classify_reply(reply_obj([REPLIER]), POST_URL, REPLIER) == QUOTE_TWEET

    def test_neither_is_not_applicable(self):
        assert classify_reply(reply_obj([]), POST_URL, REPLIER) == NOT_APPLICABLE
        assert classify_reply(reply_obj(["elsewhere"]), POST_URL, REPLIER) == NOT_APPLICABLE

    def test_extra_channels_do_not_change_classification(self):
        channels = [POST_URL, REPLIER, "The Glue Factory"]
        assert classify_reply(reply_obj(channels), POST_URL, REPLIER) == X_REPLY


@pytest.mark.parametrize("impl", sorted(TARGETS))
def test_reply_matrix_scenario(impl):
    report = run_reply_matrix_scenario(TARGETS[impl]())
    bad = [a for a in report.assertions if not a.passed]
    assert not bad, [(a.description, a.expected, a.actual) for a in bad]
    assert len(report.assertions) == 12


@pytest.mark.parametrize("impl", sorted(TARGETS))
def test_crosspost_scenario(impl):
    report = run_crosspost_scenario(TARGETS[impl]())
    bad = [a for a in report.assertions if not a.passed]
    assert not bad, [(a.description, a.expected, a.actual) for a in bad]


@pytest.mark.parametrize("impl", sorted(TARGETS))
def test_membership_scenario(impl):
    report = run_membership_scenario(TARGETS[impl]())
    bad = [a for a in report.assertions if not a.passed]
    assert not bad, [(a.description, a.expected, a.actual) for a in bad]


class TestResolveMembershipUnit:
    def _activity(self, actor, kind, subject, revision=0, url=None):
        return GraffitiObject(
            value={"activity": kind, "object": subject, "target": "g"},
            url=url or f"graffiti:local:{actor}-{subject}",
            actor=actor,
            channels=["g"],
            revision=revision,
        )

    def test_fold_definition(self):
        acts = [
            self._activity("v", "Add", "alice"),
            self._activity("v", "Add", "eve", revision=0, url="graffiti:local:e"),
            self._activity("v", "Remove", "eve", revision=1, url="graffiti:local:e"),
        ]
        assert resolve_membership(acts, "v").members == {"v", "alice"}

    def test_other_actors_do_not_affect_view(self):
        acts = [self._activity("alice", "Add", "eve")]
        assert resolve_membership(acts, "bob").members == {"bob"}

    def test_permutation_stability(self):
        rng = random.Random(3)
        acts = []
        for i in range(30):
            kind = rng.choice(["Add", "Remove"])
            subject = rng.choice(["a", "b", "c"])
            acts.append(
                self._activity("v", kind, subject, revision=i,
                               url=f"graffiti:local:m-{subject}")
            )
        baseline = resolve_membership(acts, "v").members
        for _ in range(10):
            rng.shuffle(acts)
            assert resolve_membership(acts, "v").members == baseline


class TestAnnounceCompleteness:
    def test_seeded_run_is_clean(self):
        report = run_announce_completeness_check(
            1, AnnounceCheckParams(n_small_servers=5, n_well_known=3, n_actors=10)
        )
        bad = [a for a in report.assertions if not a.passed]
        assert not bad, [(a.description, a.actual) for a in bad]

    def test_zero_overlap_probability_documents_contrapositive(self):
        report = run_announce_completeness_check(
            7,
            AnnounceCheckParams(
                n_small_servers=4, n_well_known=3, n_actors=6,
                overlap_probability=0.0,
            ),
        )
        bad = [a for a in report.assertions if not a.passed]
        assert not bad, [(a.description, a.actual) for a in bad]

    def test_report_shape_is_machine_readable(self):
        report = run_announce_completeness_check(
            2, AnnounceCheckParams(n_small_servers=3, n_well_known=2, n_actors=4)
        )
        wire = report.to_wire()
        assert wire["name"].startswith("announce-completeness")
        assert all({"description", "expected", "actual", "pass"} <= set(a)
                   for a in wire["assertions"])
