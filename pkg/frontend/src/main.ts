import { App } from "./app";

document.addEventListener("DOMContentLoaded", () => {
  const app = new App(document);
  (window as unknown as { provlens: App }).provlens = app;
});
