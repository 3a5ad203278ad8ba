import { ReviewApi } from "./api.js";
import { createApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const api = new ReviewApi(params.get("api") ?? "");
const root = document.getElementById("app");
if (root) {
  const app = createApp({ api, root, author: params.get("author") ?? "" });
  void app.render();
}
