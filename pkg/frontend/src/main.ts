import { HttpApiClient } from "./client.js";
import { canvasToImage } from "./coords.js";
import { renderOverlay } from "./overlay.js";
import { SessionController } from "./session.js";

const SERVICE_URL = (window as unknown as { CLICKSEG_URL?: string }).CLICKSEG_URL
  ?? "http://127.0.0.1:8000";
const ALPHA = 0.45;

const client = new HttpApiClient(SERVICE_URL);

const imageSelect = document.getElementById("image-select") as HTMLSelectElement;
const zoomSelect = document.getElementById("zoom-select") as HTMLSelectElement;
const startButton = document.getElementById("start") as HTMLButtonElement;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const acceptButton = document.getElementById("accept") as HTMLButtonElement;
const rejectButton = document.getElementById("reject") as HTMLButtonElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

let session: SessionController | null = null;
let baseImage: ImageData | null = null;

function zoom(): number {
  return Number(zoomSelect.value);
}

function showError(message: string | null): void {
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function redraw(): void {
  if (!session || !baseImage) return;
  let pixels: Uint8ClampedArray<ArrayBuffer> = new Uint8ClampedArray(baseImage.data);
  if (session.mask) {
    try {
      pixels = new Uint8ClampedArray(
        renderOverlay(pixels, session.h, session.w, session.mask, ALPHA),
      );
    } catch (err) {
      showError(String(err));
    }
  }
  const frame = new ImageData(pixels, session.w, session.h);
  canvas.width = session.w * zoom();
  canvas.height = session.h * zoom();
  ctx.imageSmoothingEnabled = false;
  createImageBitmap(frame).then((bitmap) => {
    ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height);
    const r = Math.max(3, zoom() * 1.5);
    for (const m of session!.markers) {
      ctx.beginPath();
      ctx.arc((m.col + 0.5) * zoom(), (m.row + 0.5) * zoom(), r, 0, 2 * Math.PI);
      ctx.fillStyle = m.positive ? "#2ecc40" : "#ff4136";
      ctx.fill();
      ctx.strokeStyle = "#ffffff";
      ctx.stroke();
    }
  });
  undoButton.disabled = !session.canUndo();
  acceptButton.disabled = !session.canFinish();
  rejectButton.disabled = !session.canFinish();
  showError(session.error);
}

async function loadImageList(): Promise<void> {
  const images = await client.listImages();
  imageSelect.replaceChildren(
    ...images.map((info) => new Option(`${info.image_id} (${info.w}x${info.h})`, info.image_id)),
  );
}

async function startSession(): Promise<void> {
  const imageId = imageSelect.value;
  if (!imageId) return;
  const info = await client.createSession(imageId);
  const img = new Image();
  img.crossOrigin = "anonymous";
  img.src = `${SERVICE_URL}/v1/images/${encodeURIComponent(imageId)}/raw`;
  await img.decode().catch(() => {
    showError(`could not load image ${imageId}`);
  });
  const scratch = document.createElement("canvas");
  scratch.width = info.w;
  scratch.height = info.h;
  const sctx = scratch.getContext("2d")!;
  sctx.drawImage(img, 0, 0);
  baseImage = sctx.getImageData(0, 0, info.w, info.h);
  session = new SessionController(client, info);
  session.onUpdate = redraw;
  redraw();
}

canvas.addEventListener("mousedown", (ev) => {
  if (!session) return;
  ev.preventDefault();
  const rect = canvas.getBoundingClientRect();
  const pixel = canvasToImage(
    ev.clientX - rect.left, ev.clientY - rect.top, zoom(), session.h, session.w,
  );
  if (!pixel) return;
  session.addClick(pixel.row, pixel.col, ev.button !== 2);
});
canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());

startButton.addEventListener("click", () => void startSession());
undoButton.addEventListener("click", () => void session?.undo());
acceptButton.addEventListener("click", () => void session?.finish(true));
rejectButton.addEventListener("click", () => void session?.finish(false));
zoomSelect.addEventListener("change", redraw);

// keyboard shortcuts: z = undo, enter = accept, escape = reject
document.addEventListener("keydown", (ev) => {
  if (!session) return;
  if (ev.key === "z") void session.undo();
  else if (ev.key === "Enter") void session.finish(true);
  else if (ev.key === "Escape") void session.finish(false);
});

void loadImageList().catch((err) => showError(String(err)));
