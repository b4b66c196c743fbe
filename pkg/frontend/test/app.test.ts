import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, Report, SessionView } from "../src/api.js";
import { App } from "../src/app.js";

/** In-memory fake of the service, exposed through the fetch signature. */
class FakeServer {
  sessions = new Map<string, SessionView>();
  ratings: Array<{ fluency: number; coherency: number; success: number }> = [];
  nextId = 1;
  failNextMessage = false;

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input);
    const body = init?.body ? JSON.parse(String(init.body)) : {};
    const path = url.pathname;
    const reply = (status: number, payload: unknown) =>
      new Response(JSON.stringify(payload), { status });

    if (path === "/sessions" && init?.method === "POST") {
      const view: SessionView = {
        session_id: `s${this.nextId++}`,
        tester_id: body.tester_id,
        goal_card: "请询问38M套餐的价格",
        turns: [],
        ended: false,
        rated: false,
        progress: { rated: this.ratings.length, target: 10 },
      };
      this.sessions.set(view.session_id, view);
      return reply(201, view);
    }
    const m = path.match(/^\/sessions\/([^/]+)(?:\/(\w+))?$/);
    if (m) {
      const session = this.sessions.get(m[1]!);
      if (!session) {
        return reply(404, { error: "unknown session" });
      }
      if (!m[2]) {
        return reply(200, { ...session, progress: { rated: this.ratings.length, target: 10 } });
      }
      if (m[2] === "messages") {
        if (this.failNextMessage) {
          this.failNextMessage = false;
          return reply(500, { error: "generator failed at stage user_side" });
        }
        if (session.ended) {
          return reply(409, { error: "dialogue already ended" });
        }
        const turn = { index: session.turns.length, user: body.text, system: `回复:${body.text}` };
        session.turns.push(turn);
        return reply(200, turn);
      }
      if (m[2] === "end") {
        session.ended = true;
        return reply(200, { ended: true });
      }
      if (m[2] === "rating") {
        if (!session.ended) {
          return reply(409, { error: "end the dialogue before rating" });
        }
        this.ratings.push(body);
        session.rated = true;
        return reply(200, this.report());
      }
    }
    if (path === "/report") {
      return reply(200, this.report());
    }
    return reply(404, { error: `no route ${path}` });
  };

  report(): Report {
    const n = this.ratings.length;
    const mean = (k: "fluency" | "coherency" | "success") =>
      n ? this.ratings.reduce((acc, r) => acc + r[k], 0) / n : null;
    return { count: n, fluency: mean("fluency"), coherency: mean("coherency"), success: mean("success") };
  }
}

function setup(debug = false) {
  const server = new FakeServer();
  const root = document.createElement("div");
  document.body.innerHTML = "";
  document.body.append(root);
  const app = new App(root, new ApiClient("http://fake", server.fetch), {
    testerId: "t1",
    debug,
    now: () => new Date(0),
  });
  return { server, root, app };
}

const q = <T extends HTMLElement>(root: HTMLElement, id: string) =>
  root.querySelector<T>(`[data-testid="${id}"]`)!;

describe("chat flow", () => {
  let ctx: ReturnType<typeof setup>;

  beforeEach(async () => {
    ctx = setup();
    await ctx.app.start();
  });

  it("renders one user and one system bubble per confirmed turn", async () => {
    ctx.app.input.value = "你好";
    await ctx.app.send();
    const bubbles = ctx.root.querySelectorAll(".bubble");
    expect(bubbles).toHaveLength(2);
    expect(bubbles[0]!.getAttribute("data-speaker")).toBe("user");
    expect(bubbles[1]!.getAttribute("data-speaker")).toBe("system");
    expect(bubbles[1]!.textContent).toContain("回复:你好");
  });

  it("locks the composer while a reply is pending", async () => {
    ctx.app.input.value = "第一句";
    const inflight = ctx.app.send();
    expect(q<HTMLInputElement>(ctx.root, "input").disabled).toBe(true);
    expect(q<HTMLButtonElement>(ctx.root, "send").disabled).toBe(true);
    await inflight;
    expect(q<HTMLInputElement>(ctx.root, "input").disabled).toBe(false);
  });

  it("server failure shows an error bubble with retry and keeps the draft", async () => {
    ctx.server.failNextMessage = true;
    ctx.app.input.value = "会失败的消息";
    await ctx.app.send();
    expect(q(ctx.root, "error").hidden).toBe(false);
    expect(ctx.app.input.value).toBe("会失败的消息");
    expect(ctx.root.querySelectorAll(".bubble")).toHaveLength(0);

    await ctx.app.retry();
    expect(q(ctx.root, "error").hidden).toBe(true);
    expect(ctx.root.querySelectorAll(".bubble")).toHaveLength(2);
    expect(ctx.app.input.value).toBe("");
  });

  it("empty input does nothing", async () => {
    ctx.app.input.value = "   ";
    expect(await ctx.app.send()).toBeNull();
    expect(ctx.root.querySelectorAll(".bubble")).toHaveLength(0);
  });

  it("shows the goal card from the server", () => {
    expect(q(ctx.root, "goal-card").textContent).toContain("38M套餐");
  });
});

describe("rating flow", () => {
  let ctx: ReturnType<typeof setup>;

  beforeEach(async () => {
    ctx = setup();
    await ctx.app.start();
    ctx.app.input.value = "你好";
    await ctx.app.send();
  });

  it("reveals the rating form only after end-dialogue", async () => {
    expect(q(ctx.root, "rating-form").hidden).toBe(true);
    await ctx.app.end();
    expect(q(ctx.root, "rating-form").hidden).toBe(false);
    expect(q<HTMLInputElement>(ctx.root, "input").disabled).toBe(true);
  });

  it("submit stays disabled until all three scores are selected", async () => {
    await ctx.app.end();
    const submit = q<HTMLButtonElement>(ctx.root, "submit-rating");
    expect(submit.disabled).toBe(true);
    ctx.app.selectScore("fluency", 3);
    ctx.app.selectScore("coherency", 2);
    expect(submit.disabled).toBe(true);
    ctx.app.selectScore("success", 2);
    expect(submit.disabled).toBe(false);
  });

  it("submitting posts integers and updates progress", async () => {
    await ctx.app.end();
    ctx.app.selectScore("fluency", 3);
    ctx.app.selectScore("coherency", 2);
    ctx.app.selectScore("success", 2);
    const report = await ctx.app.submitScores();
    expect(report).toEqual({ count: 1, fluency: 3, coherency: 2, success: 2 });
    expect(ctx.server.ratings[0]).toEqual({ fluency: 3, coherency: 2, success: 2 });
    expect(q(ctx.root, "progress").textContent).toContain("1/10");
    expect(q(ctx.root, "new-dialogue").hidden).toBe(false);
  });

  it("completion banner appears at 10 rated dialogues", async () => {
    for (let i = 0; i < 10; i++) {
      if (i > 0) {
        await ctx.app.newDialogue();
        ctx.app.input.value = `第${i}句`;
        await ctx.app.send();
      }
      await ctx.app.end();
      ctx.app.selectScore("fluency", 4);
      ctx.app.selectScore("coherency", 4);
      ctx.app.selectScore("success", 4);
      await ctx.app.submitScores();
      const banner = q(ctx.root, "banner");
      expect(banner.hidden).toBe(i < 9);
    }
  });
});

describe("refresh reconstruction", () => {
  it("a new App over the same session id shows all confirmed turns", async () => {
    const ctx = setup();
    const view = await ctx.app.start();
    ctx.app.input.value = "第一句";
    await ctx.app.send();
    ctx.app.input.value = "第二句";
    await ctx.app.send();

    const root2 = document.createElement("div");
    document.body.append(root2);
    const app2 = new App(root2, new ApiClient("http://fake", ctx.server.fetch), { testerId: "t1" });
    await app2.start(view.session_id);
    const bubbles = root2.querySelectorAll(".bubble");
    expect(bubbles).toHaveLength(4);
    expect(bubbles[2]!.textContent).toContain("第二句");
  });
});

describe("debug panel", () => {
  it("stays hidden unless enabled", async () => {
    const ctx = setup(false);
    await ctx.app.start();
    expect(q(ctx.root, "debug").hidden).toBe(true);
    const ctx2 = setup(true);
    await ctx2.app.start();
    expect(q(ctx2.root, "debug").hidden).toBe(false);
  });
});
