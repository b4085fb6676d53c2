/**
 * Headless controllers for the two demo panes. All UI state is derived
 * from (objects, tombstones, pending echoes); the DOM layer only renders
 * and forwards clicks, so every behavior here is testable without a
 * browser.
 */
import { emptyFeed, feedEntries, reduceFeed, } from "./feed.js";
import { MEMBERSHIP_SCHEMA, RENAME_SCHEMA, groupName, membershipSuggestions, resolveMembership, } from "./membership.js";
import { WireError, } from "./wire.js";
const POST_SCHEMA = {
    value: { required: ["content"], properties: { content: { type: "string" } } },
};
const ACTIVITY_SCHEMA = {
    value: { required: ["activity", "target"] },
};
let tempCounter = 0;
function nextTempId() {
    tempCounter += 1;
    return `pending-${tempCounter}`;
}
class PollingController {
    constructor(wire, channels, schema, session = null) {
        this.wire = wire;
        this.channels = channels;
        this.schema = schema;
        this.session = session;
        this.state = emptyFeed();
    }
    apply(event) {
        this.state = reduceFeed(this.state, event);
    }
    /** One poll step: snapshot first, deltas after; expired cursors restart. */
    async refresh() {
        try {
            let result;
            if (this.state.cursor === null) {
                result = await this.wire.discover(this.channels, this.schema, this.session ?? undefined);
                this.apply({ kind: "snapshot", result });
            }
            else {
                result = await this.wire.continueDiscover(this.state.cursor, this.session ?? undefined);
                this.apply({ kind: "delta", result });
            }
        }
        catch (err) {
            if (err instanceof WireError && err.code === "cursor_expired") {
                this.apply({ kind: "reset" });
                return this.refresh();
            }
            this.apply({
                kind: "connection-lost",
                message: err instanceof Error ? err.message : String(err),
            });
        }
    }
    requireSession() {
        if (!this.session)
            throw new Error("log in first");
        return this.session;
    }
    /** Optimistic local echo around a put. */
    async optimisticPut(value, channels, allowed) {
        const session = this.requireSession();
        const tempId = nextTempId();
        this.apply({
            kind: "echo",
            echo: { tempId, value, actor: session.actor, channels, failed: false },
        });
        try {
            const object = await this.wire.put(session, { value, channels, allowed });
            this.apply({ kind: "ack", tempId, object });
            return object;
        }
        catch (err) {
            this.apply({ kind: "echo-failed", tempId });
            throw err;
        }
    }
    get connectionLost() {
        return this.state.lastError;
    }
    entries() {
        return feedEntries(this.state);
    }
}
/** Micro-blog pane: a shared public feed with replies and moderation. */
export class MicroBlogController extends PollingController {
    constructor(wire, feedChannel, session = null) {
        super(wire, [feedChannel], POST_SCHEMA, session);
        this.feedChannel = feedChannel;
    }
    async post(content) {
        return this.optimisticPut({ content, published: Date.now() }, [this.feedChannel]);
    }
    /**
     * Reply in the post's own channel; crossposting adds the replier's
     * channel so their followers see it too.
     */
    async reply(postUrl, content, crosspost) {
        const session = this.requireSession();
        const channels = crosspost ? [postUrl, session.actor] : [postUrl];
        return this.wire.put(session, {
            value: { content, inReplyTo: postUrl, published: Date.now() },
            channels,
        });
    }
    async deleteOwn(url) {
        await this.wire.delete(this.requireSession(), url);
    }
    /** Reified moderation: a Remove activity in the feed channel. */
    async removeFromFeed(targetUrl) {
        return this.wire.put(this.requireSession(), {
            value: { activity: "Remove", target: targetUrl },
            channels: [this.feedChannel],
        });
    }
    async removeActivities() {
        const result = await this.wire.discover([this.feedChannel], ACTIVITY_SCHEMA, this.session ?? undefined);
        return result.objects.filter((o) => o.value["activity"] === "Remove");
    }
    /**
     * The rendered feed. Applications that respect the moderators' Remove
     * activities hide removed posts; ignoring them shows everything. The
     * server state is identical either way.
     */
    visiblePosts(removes, moderators, respectRemoves) {
        const entries = feedEntries(this.state);
        if (!respectRemoves)
            return entries;
        const moderatorSet = new Set(moderators);
        const removed = new Set(removes
            .filter((o) => moderatorSet.has(o.actor))
            .map((o) => o.value["target"]));
        return entries.filter((e) => !e.url || !removed.has(e.url));
    }
}
/** Group-chat pane: allowed-list messages under per-viewer membership. */
export class GroupChatController extends PollingController {
    constructor(wire, group, session = null) {
        super(wire, [group], POST_SCHEMA, session);
        this.group = group;
        this.membershipUrls = new Map(); // subject -> my activity url
        this.activities = [];
        this.renames = [];
        this.renameUrl = null;
    }
    async refresh() {
        await super.refresh();
        const [acts, renames] = await Promise.all([
            this.wire.discover([this.group], MEMBERSHIP_SCHEMA, this.session ?? undefined),
            this.wire.discover([this.group], RENAME_SCHEMA, this.session ?? undefined),
        ]);
        this.activities = acts.objects;
        this.renames = renames.objects;
        if (this.session) {
            for (const activity of this.activities) {
                if (activity.actor === this.session.actor) {
                    const subject = activity.value["object"];
                    if (typeof subject === "string") {
                        this.membershipUrls.set(subject, activity.url);
                    }
                }
            }
            const mine = this.renames.filter((o) => o.actor === this.session.actor);
            if (mine.length > 0)
                this.renameUrl = mine[mine.length - 1].url;
        }
    }
    myMembers() {
        const session = this.requireSession();
        return resolveMembership(this.activities, session.actor);
    }
    suggestions() {
        const session = this.requireSession();
        return membershipSuggestions(this.activities, session.actor, this.myMembers());
    }
    chatName(fallback = "group chat") {
        const session = this.requireSession();
        return groupName(this.renames, session.actor, fallback);
    }
    /** One membership object per subject, toggled in place. */
    async setMembership(subject, kind) {
        const session = this.requireSession();
        const value = { activity: kind, object: subject, target: this.group };
        const existing = this.membershipUrls.get(subject);
        const object = existing
            ? await this.wire.replace(session, existing, {
                value,
                channels: [this.group],
            })
            : await this.wire.put(session, { value, channels: [this.group] });
        this.membershipUrls.set(subject, object.url);
        const kept = this.activities.filter((a) => a.url !== object.url);
        this.activities = [...kept, object];
    }
    async addMember(actor) {
        await this.setMembership(actor, "Add");
    }
    async removeMember(actor) {
        await this.setMembership(actor, "Remove");
    }
    async acceptSuggestion(suggestion) {
        await this.setMembership(suggestion.subject, suggestion.kind === "Add" ? "Add" : "Remove");
    }
    /** Messages go only to the members *I* currently list. */
    async send(content) {
        const allowed = [...this.myMembers()].sort();
        return this.optimisticPut({ content, published: Date.now() }, [this.group], allowed);
    }
    async rename(name) {
        const session = this.requireSession();
        const value = { name, describes: this.group };
        const object = this.renameUrl
            ? await this.wire.replace(session, this.renameUrl, {
                value,
                channels: [this.group],
            })
            : await this.wire.put(session, { value, channels: [this.group] });
        this.renameUrl = object.url;
        const kept = this.renames.filter((o) => o.url !== object.url);
        this.renames = [...kept, object];
    }
    messages() {
        return feedEntries(this.state);
    }
}
//# sourceMappingURL=controller.js.map