import { ApiClient } from './api.js';
import { ExplorerApp } from './app.js';
import { parseApiBase } from './render.js';

const api = new ApiClient(parseApiBase(window.location.search));
const app = new ExplorerApp(api, document);
app.start().catch((err) => {
  const banner = document.getElementById('banner');
  if (banner) {
    banner.textContent = `failed to reach the API: ${err}`;
    banner.classList.add('visible');
  }
});

// exposed for quick console experiments
(window as unknown as { explorer: ExplorerApp }).explorer = app;
