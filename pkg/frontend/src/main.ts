import { ApiClient } from "./api.js";
import { App } from "./app.js";

function baseUrl(): string {
  const meta = document.querySelector<HTMLMetaElement>('meta[name="csdial-base"]');
  if (meta?.content) {
    return meta.content.replace(/\/$/, "");
  }
  return window.location.origin;
}

function testerId(): string {
  let id = window.localStorage.getItem("csdial-tester");
  if (!id) {
    id = window.prompt("请输入测试员编号", "tester") || "tester";
    window.localStorage.setItem("csdial-tester", id);
  }
  return id;
}

window.addEventListener("DOMContentLoaded", async () => {
  const root = document.getElementById("root");
  if (!root) {
    return;
  }
  const debug = new URLSearchParams(window.location.search).has("debug");
  const app = new App(root, new ApiClient(baseUrl()), { testerId: testerId(), debug });
  const resume = window.location.hash.match(/^#s=(\w+)/)?.[1];
  try {
    const view = await app.start(resume ?? undefined);
    window.location.hash = `s=${view.session_id}`;
  } catch {
    const view = await app.start(); // stale session id: begin a fresh one
    window.location.hash = `s=${view.session_id}`;
  }
});
