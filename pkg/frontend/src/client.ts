import { RleMask } from "./rle.js";

export interface ImageInfo {
  image_id: string;
  h: number;
  w: number;
}

export interface SessionInfo {
  session_id: string;
  h: number;
  w: number;
}

export interface ClickBody {
  row: number;
  col: number;
  label: "pos" | "neg";
}

export interface ClickResponse {
  mask_rle: RleMask;
  clicks: number;
  adapted: boolean;
}

export interface UndoResponse {
  mask_rle: RleMask;
  clicks: number;
  approximate: boolean;
}

export interface FinishResponse {
  mask_rle: RleMask;
}

/** The annotation-service surface the UI depends on. */
export interface ApiClient {
  listImages(): Promise<ImageInfo[]>;
  createSession(imageId: string): Promise<SessionInfo>;
  postClick(sessionId: string, body: ClickBody): Promise<ClickResponse>;
  undo(sessionId: string): Promise<UndoResponse>;
  finish(sessionId: string, accept: boolean): Promise<FinishResponse>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/** fetch-based client for a running service, base URL without trailing slash. */
export class HttpApiClient implements ApiClient {
  constructor(private readonly baseUrl: string) {}

  async listImages(): Promise<ImageInfo[]> {
    const body = await request<{ images: ImageInfo[] }>(`${this.baseUrl}/v1/images`);
    return body.images;
  }

  createSession(imageId: string): Promise<SessionInfo> {
    return request(`${this.baseUrl}/v1/sessions`, {
      method: "POST",
      body: JSON.stringify({ image_id: imageId }),
    });
  }

  postClick(sessionId: string, body: ClickBody): Promise<ClickResponse> {
    return request(`${this.baseUrl}/v1/sessions/${sessionId}/clicks`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  undo(sessionId: string): Promise<UndoResponse> {
    return request(`${this.baseUrl}/v1/sessions/${sessionId}/undo`, {
      method: "POST",
    });
  }

  finish(sessionId: string, accept: boolean): Promise<FinishResponse> {
    return request(`${this.baseUrl}/v1/sessions/${sessionId}/finish`, {
      method: "POST",
      body: JSON.stringify({ accept }),
    });
  }
}
