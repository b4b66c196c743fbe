/** Single-page evaluation client: live chat, then a 3-metric 1-5 rating.
 *
 * Rendering rules: only server-confirmed turns appear in the transcript, the
 * composer is locked while a reply is pending, and every piece of client
 * state can be rebuilt from GET /sessions/{id} after a refresh.
 */
import { ApiClient, ApiError, ChatTurn, Rating, Report, SessionView } from "./api.js";

export interface AppOptions {
  testerId: string;
  debug?: boolean;
  now?: () => Date;
}

const METRICS = ["fluency", "coherency", "success"] as const;
type Metric = (typeof METRICS)[number];

const METRIC_LABELS: Record<Metric, string> = {
  fluency: "Fluency 流畅度",
  coherency: "Coherency 连贯性",
  success: "Success 完成度",
};

const METRIC_TOOLTIPS: Record<Metric, string> = {
  fluency: "1-5:系统回复是否通顺流畅",
  coherency: "1-5:系统回复与上下文是否逻辑连贯",
  success: "1-5:系统是否通过对话完成了您的目标",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

export class App {
  session: SessionView | null = null;
  pending = false;
  lastReport: Report | null = null;

  private readonly goalEl: HTMLElement;
  private readonly progressEl: HTMLElement;
  private readonly messagesEl: HTMLElement;
  private readonly errorEl: HTMLElement;
  private readonly errorTextEl: HTMLElement;
  private readonly retryBtn: HTMLButtonElement;
  readonly input: HTMLInputElement;
  private readonly sendBtn: HTMLButtonElement;
  private readonly endBtn: HTMLButtonElement;
  private readonly ratingEl: HTMLElement;
  private readonly submitBtn: HTMLButtonElement;
  private readonly commentEl: HTMLTextAreaElement;
  private readonly bannerEl: HTMLElement;
  private readonly newBtn: HTMLButtonElement;
  private readonly debugEl: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly opts: AppOptions,
  ) {
    root.innerHTML = "";
    const app = el("div", { class: "app" });

    const header = el("header");
    header.append(el("h1", {}, "客服对话评测"));
    this.progressEl = el("div", { "data-testid": "progress", class: "progress" });
    header.append(this.progressEl);
    app.append(header);

    this.goalEl = el("section", { "data-testid": "goal-card", class: "goal" });
    app.append(this.goalEl);

    this.messagesEl = el("section", { "data-testid": "messages", class: "chat" });
    app.append(this.messagesEl);

    this.errorEl = el("div", { "data-testid": "error", class: "error", hidden: "" });
    this.errorTextEl = el("span");
    this.retryBtn = el("button", { "data-testid": "retry", type: "button" }, "重试");
    this.retryBtn.addEventListener("click", () => void this.retry());
    this.errorEl.append(this.errorTextEl, this.retryBtn);
    app.append(this.errorEl);

    const composer = el("div", { class: "composer" });
    this.input = el("input", {
      "data-testid": "input",
      placeholder: "输入您想问客服的话…",
    });
    this.sendBtn = el("button", { "data-testid": "send", type: "button" }, "发送");
    this.sendBtn.addEventListener("click", () => void this.send());
    this.input.addEventListener("keydown", (e) => {
      if (e.key === "Enter") {
        void this.send();
      }
    });
    this.endBtn = el("button", { "data-testid": "end", type: "button" }, "结束对话");
    this.endBtn.addEventListener("click", () => void this.end());
    composer.append(this.input, this.sendBtn, this.endBtn);
    app.append(composer);

    this.ratingEl = el("section", { "data-testid": "rating-form", class: "rating", hidden: "" });
    for (const metric of METRICS) {
      const fs = el("fieldset", { title: METRIC_TOOLTIPS[metric] });
      fs.append(el("legend", {}, METRIC_LABELS[metric]));
      for (let v = 1; v <= 5; v++) {
        const label = el("label");
        const radio = el("input", {
          type: "radio",
          name: metric,
          value: String(v),
          "data-testid": `${metric}-${v}`,
        });
        radio.addEventListener("change", () => this.updateSubmitState());
        label.append(radio, el("span", {}, String(v)));
        fs.append(label);
      }
      this.ratingEl.append(fs);
    }
    this.commentEl = el("textarea", {
      "data-testid": "comment",
      placeholder: "可选:补充说明",
    });
    this.submitBtn = el("button", { "data-testid": "submit-rating", type: "button" }, "提交评分");
    this.submitBtn.disabled = true;
    this.submitBtn.addEventListener("click", () => void this.submitScores());
    this.ratingEl.append(this.commentEl, this.submitBtn);
    app.append(this.ratingEl);

    this.bannerEl = el(
      "div",
      { "data-testid": "banner", class: "banner", hidden: "" },
      "已完成全部对话任务,感谢参与!",
    );
    app.append(this.bannerEl);

    this.newBtn = el("button", { "data-testid": "new-dialogue", type: "button", hidden: "" }, "开始下一段对话");
    this.newBtn.addEventListener("click", () => void this.newDialogue());
    app.append(this.newBtn);

    this.debugEl = el("section", { "data-testid": "debug", class: "debug", hidden: "" });
    app.append(this.debugEl);

    root.append(app);
  }

  /** Create a fresh session, or rebuild state from the server when an id is given. */
  async start(sessionId?: string): Promise<SessionView> {
    this.session = sessionId
      ? await this.api.getSession(sessionId)
      : await this.api.createSession(this.opts.testerId);
    this.render();
    return this.session;
  }

  get sessionId(): string {
    if (!this.session) {
      throw new Error("no active session");
    }
    return this.session.session_id;
  }

  private timestamp(): string {
    const now = this.opts.now ? this.opts.now() : new Date();
    return now.toTimeString().slice(0, 8);
  }

  private bubble(speaker: "user" | "system", text: string): HTMLElement {
    const wrap = el("div", { class: `bubble ${speaker}`, "data-speaker": speaker });
    wrap.append(el("span", { class: "text" }, text));
    wrap.append(el("time", {}, this.timestamp()));
    return wrap;
  }

  private render(): void {
    const s = this.session;
    if (!s) {
      return;
    }
    this.goalEl.textContent = s.goal_card;
    this.progressEl.textContent = `已评分 ${s.progress.rated}/${s.progress.target} 段对话`;
    this.messagesEl.innerHTML = "";
    for (const turn of s.turns) {
      this.messagesEl.append(this.bubble("user", turn.user));
      this.messagesEl.append(this.bubble("system", turn.system));
    }
    this.renderDebug();
    this.setComposerEnabled(!s.ended && !this.pending);
    this.ratingEl.hidden = !s.ended || s.rated;
    this.newBtn.hidden = !s.rated;
    this.bannerEl.hidden = s.progress.rated < s.progress.target;
  }

  private renderDebug(): void {
    const s = this.session;
    if (!s || !this.opts.debug) {
      return;
    }
    this.debugEl.hidden = false;
    this.debugEl.innerHTML = "";
    for (const turn of s.turns) {
      if (turn.debug) {
        this.debugEl.append(
          el(
            "div",
            {},
            `#${turn.index} intent=${turn.debug.user_intent} kb=${turn.debug.kb_status} ` +
              `entity=${turn.debug.predicted_entity ?? "-"}`,
          ),
        );
      }
    }
  }

  private setComposerEnabled(enabled: boolean): void {
    this.input.disabled = !enabled;
    this.sendBtn.disabled = !enabled;
    this.endBtn.disabled = !enabled || (this.session?.turns.length ?? 0) === 0;
  }

  private showError(message: string): void {
    this.errorTextEl.textContent = message;
    this.errorEl.hidden = false;
  }

  async send(): Promise<ChatTurn | null> {
    const s = this.session;
    if (!s || s.ended || this.pending) {
      return null;
    }
    const text = this.input.value.trim();
    if (!text) {
      return null;
    }
    this.pending = true;
    this.errorEl.hidden = true;
    this.setComposerEnabled(false);
    try {
      const turn = await this.api.sendMessage(s.session_id, text);
      s.turns.push(turn);
      this.input.value = ""; // only cleared after the server confirms
      return turn;
    } catch (err) {
      const detail = err instanceof ApiError ? err.message : String(err);
      this.showError(`发送失败:${detail}`);
      return null; // draft text stays in the input for retry
    } finally {
      this.pending = false;
      this.render();
    }
  }

  async retry(): Promise<ChatTurn | null> {
    this.errorEl.hidden = true;
    return this.send();
  }

  async end(): Promise<void> {
    const s = this.session;
    if (!s || s.ended) {
      return;
    }
    await this.api.endDialogue(s.session_id);
    s.ended = true;
    this.render();
  }

  selectedRating(): Partial<Rating> {
    const out: Partial<Rating> = {};
    for (const metric of METRICS) {
      const checked = this.ratingEl.querySelector<HTMLInputElement>(
        `input[name=${metric}]:checked`,
      );
      if (checked) {
        out[metric] = Number(checked.value);
      }
    }
    const comment = this.commentEl.value.trim();
    if (comment) {
      out.comment = comment;
    }
    return out;
  }

  selectScore(metric: Metric, value: number): void {
    const radio = this.ratingEl.querySelector<HTMLInputElement>(
      `input[name=${metric}][value="${value}"]`,
    );
    if (!radio) {
      throw new Error(`no such score ${metric}=${value}`);
    }
    radio.checked = true;
    this.updateSubmitState();
  }

  private updateSubmitState(): void {
    const r = this.selectedRating();
    this.submitBtn.disabled = !(r.fluency && r.coherency && r.success);
  }

  async submitScores(): Promise<Report | null> {
    const s = this.session;
    if (!s || this.submitBtn.disabled) {
      return null;
    }
    const rating = this.selectedRating() as Rating;
    try {
      this.lastReport = await this.api.submitRating(s.session_id, rating);
    } catch (err) {
      const detail = err instanceof ApiError ? err.message : String(err);
      this.showError(`评分失败:${detail}`);
      return null;
    }
    // refresh progress and rated flag from the server, never locally
    this.session = await this.api.getSession(s.session_id);
    this.render();
    return this.lastReport;
  }

  async newDialogue(): Promise<SessionView> {
    const view = await this.start();
    for (const metric of METRICS) {
      const checked = this.ratingEl.querySelector<HTMLInputElement>(
        `input[name=${metric}]:checked`,
      );
      if (checked) {
        checked.checked = false;
      }
    }
    this.commentEl.value = "";
    this.updateSubmitState();
    return view;
  }
}
