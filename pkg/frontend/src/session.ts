import { ApiClient, SessionInfo } from "./client.js";
import { RleMask } from "./rle.js";

export type SessionStatus = "active" | "finished";

export interface Marker {
  row: number;
  col: number;
  positive: boolean;
}

/**
 * Client-side session state machine.
 *
 * Markers are placed optimistically on click; the mask updates when the
 * server responds. At most one click request is in flight; later clicks
 * queue and are sent in order. Each sent click carries a sequence number
 * and a response is applied only if no newer response has been displayed,
 * so the overlay always reflects the highest acknowledged click.
 */
export class SessionController {
  readonly sessionId: string;
  readonly h: number;
  readonly w: number;

  mask: RleMask | null = null;
  status: SessionStatus = "active";
  /** Last non-fatal service error, for a dismissable banner. */
  error: string | null = null;
  /** Called after every state change, for rendering. */
  onUpdate: () => void = () => {};

  private acked: Marker[] = []; // server-confirmed clicks
  private queue: Marker[] = []; // optimistic, not yet confirmed
  private nextSeq = 1;
  private displayedSeq = 0;
  private inflight = false;
  private pending: Promise<void> = Promise.resolve();

  constructor(
    private readonly client: ApiClient,
    info: SessionInfo,
  ) {
    this.sessionId = info.session_id;
    this.h = info.h;
    this.w = info.w;
  }

  /** Confirmed markers followed by optimistic ones, in click order. */
  get markers(): Marker[] {
    return [...this.acked, ...this.queue];
  }

  get clickCount(): number {
    return this.acked.length + this.queue.length;
  }

  get busy(): boolean {
    return this.inflight || this.queue.length > 0;
  }

  canClick(): boolean {
    return this.status === "active";
  }

  canUndo(): boolean {
    return this.status === "active" && this.acked.length > 0 && !this.busy;
  }

  canFinish(): boolean {
    return this.status === "active" && !this.busy;
  }

  /** Place a click: marker immediately, request queued behind any in flight. */
  addClick(row: number, col: number, positive: boolean): void {
    if (!this.canClick()) return;
    this.queue.push({ row, col, positive });
    this.onUpdate();
    this.pending = this.pending.then(() => this.pump());
  }

  /**
   * Apply a server mask for the given click sequence number. Returns false
   * and leaves the display untouched when a newer response is already shown.
   */
  applyServerMask(seq: number, mask: RleMask): boolean {
    if (seq < this.displayedSeq) return false;
    this.displayedSeq = seq;
    this.mask = mask;
    return true;
  }

  /** Resolves when no click request is queued or in flight. */
  idle(): Promise<void> {
    return this.pending;
  }

  async undo(): Promise<void> {
    if (!this.canUndo()) return;
    try {
      const resp = await this.client.undo(this.sessionId);
      this.acked = this.acked.slice(0, resp.clicks);
      this.applyServerMask(this.nextSeq++, resp.mask_rle);
    } catch (err) {
      this.error = String(err);
    }
    this.onUpdate();
  }

  async finish(accept: boolean): Promise<RleMask | null> {
    if (!this.canFinish()) return null;
    try {
      const resp = await this.client.finish(this.sessionId, accept);
      this.status = "finished";
      this.applyServerMask(this.nextSeq++, resp.mask_rle);
      this.onUpdate();
      return resp.mask_rle;
    } catch (err) {
      this.error = String(err);
      this.onUpdate();
      return null;
    }
  }

  private async pump(): Promise<void> {
    if (this.inflight) return;
    const marker = this.queue[0];
    if (marker === undefined) return;
    this.inflight = true;
    const seq = this.nextSeq++;
    try {
      const resp = await this.client.postClick(this.sessionId, {
        row: marker.row,
        col: marker.col,
        label: marker.positive ? "pos" : "neg",
      });
      this.queue.shift();
      this.acked.push(marker);
      // confirmed marker count must match the server's click count
      this.acked = this.acked.slice(0, resp.clicks);
      this.applyServerMask(seq, resp.mask_rle);
    } catch (err) {
      // drop the optimistic marker, surface the error, keep the session usable
      this.queue.shift();
      this.error = String(err);
    } finally {
      this.inflight = false;
    }
    this.onUpdate();
    await this.pump();
  }
}
