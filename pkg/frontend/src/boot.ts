/** Browser entry point: mount the console on #app against same-origin API. */
import { ApiClient } from "./api.js";
import { startApp } from "./main.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("index.html must contain an #app element");
}
startApp(root, new ApiClient(""));
