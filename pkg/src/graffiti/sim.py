"""Executable scenarios: reply designs, crosspost moderation, membership
folds, and the randomized announce-protocol completeness check.

Every scenario produces a machine-readable report of assertions rather
than raising, so CI can surface all failures at once. The moderation and
membership scenarios deliberately use nothing but the public API plus
client-side folds over reified activities: a "removed" reply is hidden
only by applications that choose to honor the Remove activity, and every
chat member computes their own membership from their own Add/Remove
activities.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .announce import AnnounceConfig, announce_discover, publish_announcements
from .api import ObjectBase
from .conformance import TargetContext
from .model import GraffitiObject
from .netsim import VirtualNet
from .remote.client import RemoteClient
from .remote.server import RemoteServer, ServerConfig

X_REPLY = "XReply"
INSTAGRAM_REPLY = "InstagramReply"
QUOTE_TWEET = "QuoteTweet"
NOT_APPLICABLE = "NotApplicable"

GLUE_FACTORY_CHANNEL = "The Glue Factory"
GLITTER_DIRECTORY_CHANNEL = "Glitter"
FLYER_START_TIME = 1728165600000


def classify_reply(reply: GraffitiObject, post_url: str, replier: str) -> str:
    """Reply design as a total function of channel placement."""
    in_post = post_url in reply.channels
    in_replier = replier in reply.channels
    if in_post and in_replier:
        return X_REPLY
    if in_post:
        return INSTAGRAM_REPLY
    if in_replier:
        return QUOTE_TWEET
    return NOT_APPLICABLE


@dataclass
class ScenarioAssertion:
    description: str
    expected: object
    actual: object

    @property
    def passed(self) -> bool:
        return self.expected == self.actual


@dataclass
class ScenarioReport:
    name: str
    assertions: list[ScenarioAssertion] = field(default_factory=list)

    def check(self, description: str, expected, actual) -> None:
        self.assertions.append(ScenarioAssertion(description, expected, actual))

    def ok(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "ok": self.ok(),
            "assertions": [
                {
                    "description": a.description,
                    "expected": a.expected,
                    "actual": a.actual,
                    "pass": a.passed,
                }
                for a in self.assertions
            ],
        }


REPLY_SCHEMA = {"value": {"required": ["inReplyTo", "content"]}}


def run_reply_matrix_scenario(target: TargetContext) -> ScenarioReport:
    """All four reply designs coexisting on one post."""
    report = ScenarioReport("reply-matrix")
    impl = target.impl
    author = target.login("author")
    replier_s = target.login("replier")
    replier = replier_s.actor

    post = impl.put(
        ObjectBase(value={"content": "a post"}, channels=[author.actor]), author
    )

    def reply(channels):
        return impl.put(
            ObjectBase(
                value={"content": "a reply", "inReplyTo": post.url},
                channels=channels,
            ),
            replier_s,
        )

    designs = {
        X_REPLY: reply([post.url, replier]),
        INSTAGRAM_REPLY: reply([post.url]),
        QUOTE_TWEET: reply([replier]),
        NOT_APPLICABLE: reply([]),
    }
    for want, obj in designs.items():
        report.check(
            f"classification of the {want} placement",
            want,
            classify_reply(impl.get(obj.url, {}, replier_s), post.url, replier),
        )

    thread = {o.url for o in impl.discover([post.url], REPLY_SCHEMA)}
    profile = {o.url for o in impl.discover([replier], REPLY_SCHEMA)}
    in_thread = {X_REPLY: True, INSTAGRAM_REPLY: True, QUOTE_TWEET: False, NOT_APPLICABLE: False}
    in_profile = {X_REPLY: True, INSTAGRAM_REPLY: False, QUOTE_TWEET: True, NOT_APPLICABLE: False}
    for design, obj in designs.items():
        report.check(
            f"{design} visible in the post's thread view",
            in_thread[design],
            obj.url in thread,
        )
        report.check(
            f"{design} visible in the replier's profile view",
            in_profile[design],
            obj.url in profile,
        )
    return report


REMOVE_SCHEMA = {"value": {"required": ["activity", "target"],
                           "properties": {"activity": {"const": "Remove"}}}}


def _moderated_thread(impl, flyer_url: str, moderators: Iterable[str],
                      respect_removes: bool) -> set[str]:
    """A reply-thread view: discover replies, optionally folding Removes
    from the configured moderator set. Pure client-side interpretation."""
    replies = {o.url for o in impl.discover([flyer_url], REPLY_SCHEMA)}
    if not respect_removes:
        return replies
    removed = {
        o.value["target"]
        for o in impl.discover([flyer_url], REMOVE_SCHEMA)
        if o.actor in set(moderators)
    }
    return replies - removed


def run_crosspost_scenario(target: TargetContext) -> ScenarioReport:
    """Venue flyer, crossposted reply, reified moderation."""
    report = ScenarioReport("crosspost-moderation")
    impl = target.impl
    organizer = target.login("organizer")
    replier = target.login("replier")
    rando = target.login("rando")

    flyer = impl.put(
        ObjectBase(
            value={
                "content": "dance your queer hooves off",
                "startTime": FLYER_START_TIME,
            },
            channels=[GLUE_FACTORY_CHANNEL],
        ),
        organizer,
    )
    reply = impl.put(
        ObjectBase(
            value={"content": "omg yess", "inReplyTo": flyer.url},
            channels=[flyer.url, replier.actor],  # crosspost to Glitter
        ),
        replier,
    )
    moderators = [organizer.actor]

    report.check(
        "reply visible in both views before any Remove",
        (True, True),
        (
            reply.url in _moderated_thread(impl, flyer.url, moderators, True),
            reply.url in _moderated_thread(impl, flyer.url, moderators, False),
        ),
    )

    impl.put(
        ObjectBase(
            value={"activity": "Remove", "target": reply.url},
            channels=[flyer.url],
        ),
        rando,
    )
    report.check(
        "Remove by a non-organizer is ignored by the moderated view",
        True,
        reply.url in _moderated_thread(impl, flyer.url, moderators, True),
    )

    impl.put(
        ObjectBase(
            value={"activity": "Remove", "target": reply.url},
            channels=[flyer.url],
        ),
        organizer,
    )
    report.check(
        "organizer Remove hides the reply in the moderated view",
        False,
        reply.url in _moderated_thread(impl, flyer.url, moderators, True),
    )
    report.check(
        "reply stays visible in the view that ignores Removes",
        True,
        reply.url in _moderated_thread(impl, flyer.url, moderators, False),
    )
    report.check(
        "crossposted reply reaches the replier's followers' feed",
        True,
        reply.url in {o.url for o in impl.discover([replier.actor], REPLY_SCHEMA)},
    )

    calendar_schema = {
        "value": {"required": ["startTime"], "properties": {"startTime": {"type": "number"}}}
    }
    flyer_again = impl.get(flyer.url, calendar_schema)
    report.check(
        "flyer startTime is extractable for the calendar application",
        FLYER_START_TIME,
        flyer_again.value.get("startTime"),
    )
    return report


@dataclass
class MembershipView:
    viewer: str
    members: set[str]


def resolve_membership(activities: Iterable[GraffitiObject], viewer: str) -> MembershipView:
    """Fold ONLY the viewer's own Add/Remove activities, in revision order.

    Everyone is the sole administrator of their own view; other actors'
    changes are at most suggestions. The viewer is always a member of
    their own view.
    """
    members: set[str] = set()
    mine = [a for a in activities if a.actor == viewer]
    for activity in sorted(mine, key=lambda a: (a.revision, a.url)):
        kind = activity.value.get("activity")
        subject = activity.value.get("object")
        if not isinstance(subject, str):
            continue
        if kind == "Add":
            members.add(subject)
        elif kind == "Remove":
            members.discard(subject)
    members.add(viewer)
    return MembershipView(viewer=viewer, members=members)


MEMBERSHIP_SCHEMA = {
    "value": {
        "required": ["activity", "object", "target"],
        "properties": {"activity": {"enum": ["Add", "Remove"]}},
    }
}


def run_membership_scenario(target: TargetContext, seed: int = 1) -> ScenarioReport:
    """Per-viewer group membership, plus a brute-force fold oracle."""
    report = ScenarioReport("membership-fold")
    impl = target.impl
    alice = target.login("alice")
    bob = target.login("bob")
    group = f"group-{seed}-{random.Random(seed).randrange(10**6)}"

    # one membership object per (viewer, subject), toggled by replacement:
    # revisions order same-subject changes, and distinct subjects commute,
    # so folding a snapshot in revision order is deterministic
    membership_urls: dict[tuple[str, str], str] = {}

    def act(session, kind, subject):
        key = (session.actor, subject)
        obj = impl.put(
            ObjectBase(
                value={"activity": kind, "object": subject, "target": group},
                channels=[group],
                url=membership_urls.get(key),
            ),
            session,
        )
        membership_urls[key] = obj.url
        return obj

    act(alice, "Add", bob.actor)
    act(alice, "Add", "cs:actor:eve")
    act(alice, "Remove", "cs:actor:eve")
    act(bob, "Add", alice.actor)

    activities = list(impl.discover([group], MEMBERSHIP_SCHEMA))
    alice_view = resolve_membership(activities, alice.actor)
    bob_view = resolve_membership(activities, bob.actor)
    report.check(
        "alice's fold: add bob, add eve, remove eve",
        {alice.actor, bob.actor},
        alice_view.members,
    )
    report.check(
        "bob never added eve, so eve is absent from bob's view",
        False,
        "cs:actor:eve" in bob_view.members,
    )
    report.check(
        "alice's Add(bob) does not edit bob's own view implicitly",
        {bob.actor, alice.actor},
        bob_view.members,
    )

    # randomized interleaving vs a brute-force replay oracle
    rng = random.Random(seed + 77)
    people = [f"cs:actor:p{i}" for i in range(4)]
    random_fold: set[str] = set()
    for _ in range(50):
        kind = rng.choice(["Add", "Remove"])
        subject = rng.choice(people)
        act(alice, kind, subject)
        if kind == "Add":
            random_fold.add(subject)
        else:
            random_fold.discard(subject)
    expected = random_fold | {alice.actor, bob.actor}  # bob from the Add above
    activities = list(impl.discover([group], MEMBERSHIP_SCHEMA))
    folded = resolve_membership(activities, alice.actor)
    report.check("random interleaving equals the replay oracle", expected, folded.members)

    shuffled = list(activities)
    rng.shuffle(shuffled)
    report.check(
        "membership fold is stable under input permutation",
        folded.members,
        resolve_membership(shuffled, alice.actor).members,
    )

    # group naming: each viewer's header follows their own latest rename
    name_obj = impl.put(
        ObjectBase(value={"name": "Planning", "describes": group}, channels=[group]),
        alice,
    )
    impl.put(
        ObjectBase(
            value={"name": "Alice is Stressed", "describes": group},
            channels=[group],
            url=name_obj.url,
        ),
        alice,
    )
    impl.put(
        ObjectBase(value={"name": "Alice is a Superstar", "describes": group}, channels=[group]),
        bob,
    )
    name_schema = {"value": {"required": ["name", "describes"]}}
    alice_names = [o for o in impl.discover([group], name_schema) if o.actor == alice.actor]
    latest = max(alice_names, key=lambda o: (o.revision, o.url))
    report.check(
        "alice's header shows her own latest rename, not bob's",
        "Alice is Stressed",
        latest.value["name"],
    )
    return report


@dataclass
class AnnounceCheckParams:
    n_small_servers: int = 5
    n_well_known: int = 3
    n_actors: int = 10
    n_objects: int = 2
    overlap_probability: float = 0.5
    n_readers: int = 6


def run_announce_completeness_check(
    seed: int, params: Optional[AnnounceCheckParams] = None
) -> ScenarioReport:
    """Random federation topology; checks the rendezvous guarantee.

    Whenever a reader's and a poster's well-known sets overlap, the
    reader finds every one of the poster's matching objects; any misses
    must come from posters with fully disjoint sets. Phase-2 requests may
    only hit servers that actually announced in the queried channels.
    """
    params = params or AnnounceCheckParams()
    report = ScenarioReport(f"announce-completeness-seed-{seed}")
    rng = random.Random(seed)

    net = VirtualNet()
    http = net.client()
    smalls = [f"http://small{i}.seed{seed}.test" for i in range(params.n_small_servers)]
    wks = [f"http://wk{i}.seed{seed}.test" for i in range(params.n_well_known)]
    for origin in smalls + wks:
        authority = origin.removeprefix("http://")
        net.add(origin, RemoteServer(
            ServerConfig(public_origin=authority, secret_rounds=64)
        ))

    channel_pool = [f"topic{i}" for i in range(max(4, params.n_small_servers))]
    content_schema = {"value": {"required": ["content"]}}

    def client_for(origin):
        return RemoteClient([origin], http=http)

    posters = []
    for i in range(params.n_actors):
        handle = f"actor{i}"
        home = rng.choice(smalls)
        wk_set = sorted(o for o in wks if rng.random() < params.overlap_probability)
        if not wk_set:
            wk_set = [rng.choice(wks)]
        home_client = client_for(home)
        home_client.register(handle, "pw")
        home_session = home_client.login(handle, secret="pw", origin=home)
        wk_sessions = {}
        for wk in wk_set:
            c = client_for(wk)
            c.register(handle, "pw")
            wk_sessions[wk] = c.login(handle, secret="pw", origin=wk)
        posted_channels = set()
        urls = []
        for j in range(params.n_objects):
            chans = rng.sample(channel_pool, rng.randint(1, 2))
            obj = home_client.put(
                ObjectBase(value={"content": f"obj-{i}-{j}"}, channels=chans),
                home_session,
            )
            posted_channels.update(chans)
            urls.append(obj.url)
        publish = publish_announcements(
            wk_sessions, home, sorted(posted_channels),
            AnnounceConfig(well_known=wk_set), http=http,
        )
        posters.append(
            {
                "handle": handle,
                "home": home,
                "wk_set": set(wk_set),
                "urls": set(urls),
                "publish_failures": publish.failures,
            }
        )

    report.check(
        "announcement publishing succeeded everywhere",
        {},
        {p["handle"]: p["publish_failures"] for p in posters if p["publish_failures"]},
    )

    # oracle: one registry-discover across every server in existence
    oracle_client = RemoteClient(smalls + wks, http=http)
    oracle_stream = oracle_client.discover(channel_pool, content_schema)
    url_to_poster = {}
    for obj in oracle_stream:
        for p in posters:
            if obj.url in p["urls"]:
                url_to_poster[obj.url] = p
    all_urls = set(url_to_poster)

    guaranteed_misses = []
    reach_mismatches = []
    efficiency_violations = []
    readers = rng.sample(posters, min(params.n_readers, len(posters)))
    for reader in readers:
        mark = len(net.request_log)
        stream = announce_discover(
            channel_pool,
            content_schema,
            AnnounceConfig(well_known=sorted(reader["wk_set"])),
            http=http,
        )
        found = {o.url for o in stream}
        expected = {
            url
            for url, poster in url_to_poster.items()
            if poster["wk_set"] & reader["wk_set"]
        }
        guaranteed_misses.extend(sorted(expected - found))

        # exact reachability: the reader sees precisely the content hosted
        # on servers somebody they can rendezvous with announced
        announced_homes = {
            p["home"] for p in posters if p["wk_set"] & reader["wk_set"]
        }
        predicted = {
            url
            for url, poster in url_to_poster.items()
            if poster["home"] in announced_homes
        }
        if found != predicted:
            reach_mismatches.append(
                (reader["handle"], sorted(found ^ predicted))
            )

        for request in net.request_log[mark:]:
            origin = request.origin
            if origin in smalls and origin not in announced_homes:
                efficiency_violations.append((reader["handle"], origin))

    report.check("objects guaranteed by the overlap rule are never missed",
                 [], guaranteed_misses)
    report.check("discovery reaches exactly the announced servers' content",
                 [], reach_mismatches)
    report.check("no phase-2 request reaches an unannounced server",
                 [], efficiency_violations)
    return report


SCENARIOS: dict[str, Callable[..., ScenarioReport]] = {
    "reply-matrix": run_reply_matrix_scenario,
    "crosspost": run_crosspost_scenario,
    "membership": run_membership_scenario,
}
