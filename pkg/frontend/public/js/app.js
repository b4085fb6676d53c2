/**
 * DOM wiring for the two demo panes. Rendering is a pure function of
 * controller state; this file only draws and forwards clicks. The server
 * origin comes from the ?server= query parameter.
 */
import { GroupChatController, MicroBlogController } from "./controller.js";
import { RemoteWire } from "./wire.js";
const FEED_CHANNEL = "demo-feed";
const GROUP_CHANNEL = "demo-group";
const BASE_POLL_MS = 2000;
const params = new URLSearchParams(window.location.search);
const origin = params.get("server") ?? "http://127.0.0.1:7380";
const wire = new RemoteWire(origin);
let session = null;
let blog = null;
let chat = null;
let pollDelay = BASE_POLL_MS;
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
function text(tag, content, cls) {
    const node = document.createElement(tag);
    node.textContent = content;
    if (cls)
        node.className = cls;
    return node;
}
async function login(handle, secret) {
    try {
        await wire.register(handle, secret);
    }
    catch {
        /* existing account: fine */
    }
    session = await wire.login(handle, secret);
    blog = new MicroBlogController(wire, FEED_CHANNEL, session);
    chat = new GroupChatController(wire, GROUP_CHANNEL, session);
    el("login-pane").hidden = true;
    el("panes").hidden = false;
    el("whoami").textContent = session.actor;
    void poll();
}
async function renderBlog() {
    if (!blog || !session)
        return;
    const removes = await blog.removeActivities();
    const moderators = [session.actor]; // the demo treats you as your own moderator
    const respect = el("respect-removes").checked;
    const list = el("feed");
    list.replaceChildren();
    for (const entry of blog.visiblePosts(removes, moderators, respect)) {
        const item = document.createElement("li");
        item.className = entry.pending ? (entry.failed ? "failed" : "pending") : "settled";
        item.append(text("span", String(entry.value["content"] ?? "")));
        item.append(text("small", ` — ${entry.actor}`));
        if (entry.url && !entry.pending) {
            const url = entry.url;
            const replyBtn = text("button", "reply");
            replyBtn.onclick = () => {
                const content = prompt("reply:") ?? "";
                const crosspost = confirm("Crosspost to your followers' feed?");
                if (content)
                    void blog.reply(url, content, crosspost).then(poll);
            };
            item.append(replyBtn);
            const removeBtn = text("button", "remove");
            removeBtn.onclick = () => void blog.removeFromFeed(url).then(poll);
            item.append(removeBtn);
            if (entry.actor === session.actor) {
                const deleteBtn = text("button", "delete");
                deleteBtn.onclick = () => void blog.deleteOwn(url).then(poll);
                item.append(deleteBtn);
            }
        }
        list.append(item);
    }
    el("feed-banner").hidden = blog.connectionLost === null;
}
function renderChat() {
    if (!chat || !session)
        return;
    el("chat-name").textContent = chat.chatName("demo group");
    const members = el("members");
    members.replaceChildren();
    for (const member of [...chat.myMembers()].sort()) {
        const item = document.createElement("li");
        item.append(text("span", member));
        if (member !== session.actor) {
            const btn = text("button", "remove");
            btn.onclick = () => void chat.removeMember(member).then(poll);
            item.append(btn);
        }
        members.append(item);
    }
    const suggestions = el("suggestions");
    suggestions.replaceChildren();
    for (const s of chat.suggestions()) {
        const btn = text("button", `${s.kind === "Add" ? "Add" : "Remove"} ${s.subject} (suggested by ${s.by})`);
        btn.onclick = () => void chat.acceptSuggestion(s).then(poll);
        suggestions.append(btn);
    }
    const log = el("messages");
    log.replaceChildren();
    for (const entry of chat.messages()) {
        const item = document.createElement("li");
        item.className = entry.pending ? "pending" : "settled";
        item.append(text("span", String(entry.value["content"] ?? "")));
        item.append(text("small", ` — ${entry.actor}`));
        log.append(item);
    }
}
async function poll() {
    if (!blog || !chat)
        return;
    await Promise.all([blog.refresh(), chat.refresh()]);
    await renderBlog();
    renderChat();
    // back off while the server is unreachable, reset once it answers
    pollDelay = blog.connectionLost ? Math.min(pollDelay * 2, 30000) : BASE_POLL_MS;
    window.setTimeout(() => void poll(), pollDelay);
}
export function start() {
    el("login-form").onsubmit = (ev) => {
        ev.preventDefault();
        void login(el("handle").value, el("secret").value);
    };
    el("post-form").onsubmit = (ev) => {
        ev.preventDefault();
        const input = el("post-input");
        if (blog && input.value) {
            void blog.post(input.value).then(poll);
            input.value = "";
            void renderBlog(); // optimistic echo is visible immediately
        }
    };
    el("send-form").onsubmit = (ev) => {
        ev.preventDefault();
        const input = el("send-input");
        if (chat && input.value) {
            void chat.send(input.value).then(poll);
            input.value = "";
            renderChat();
        }
    };
    el("add-member-form").onsubmit = (ev) => {
        ev.preventDefault();
        const input = el("member-input");
        if (chat && input.value) {
            void chat.addMember(input.value).then(poll);
            input.value = "";
        }
    };
    el("rename-form").onsubmit = (ev) => {
        ev.preventDefault();
        const input = el("rename-input");
        if (chat && input.value) {
            void chat.rename(input.value).then(poll);
            input.value = "";
        }
    };
}
start();
//# sourceMappingURL=app.js.map