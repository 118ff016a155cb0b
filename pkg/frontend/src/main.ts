import { StudyApi } from "./api.js";
import { TriageApp } from "./app.js";

document.addEventListener("DOMContentLoaded", () => {
  const container = document.getElementById("app");
  if (!container) {
    throw new Error("missing #app container");
  }
  new TriageApp(container, new StudyApi()).start();
});
