/**
 * Typed client for the curation HTTP API.
 *
 * Validation happens client-side before any network call: label values
 * must come from the known enums and mask payloads must be binary, so the
 * UI never sends a request the server is guaranteed to reject.
 */

import { MaskBuffer } from "./maskBuffer.js";
import { encodeGrayPng } from "./png.js";
import {
  BLUR_TYPES,
  INTENSITIES,
  LabelPatch,
  REVIEW_STATES,
  SamplePage,
  SampleRecord,
  Stats,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ValidationError extends Error {}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = await res.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return res.statusText || "request failed";
  }
}

export interface ListFilters {
  state?: string;
  type?: string;
  page?: number;
  pageSize?: number;
}

export class CurationApi {
  constructor(private baseUrl: string = "", private fetchFn: FetchLike = (...a) => fetch(...a)) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    if (!res.ok) {
      throw new ApiError(res.status, await errorDetail(res));
    }
    return res;
  }

  async listSamples(filters: ListFilters = {}): Promise<SamplePage> {
    const params = new URLSearchParams();
    if (filters.state) params.set("state", filters.state);
    if (filters.type) params.set("type", filters.type);
    if (filters.page) params.set("page", String(filters.page));
    if (filters.pageSize) params.set("page_size", String(filters.pageSize));
    const query = params.toString();
    const res = await this.request(`/api/samples${query ? "?" + query : ""}`);
    return res.json();
  }

  async getSample(id: string): Promise<SampleRecord> {
    const res = await this.request(`/api/samples/${encodeURIComponent(id)}`);
    return res.json();
  }

  imageUrl(id: string): string {
    return `${this.baseUrl}/api/samples/${encodeURIComponent(id)}/image`;
  }

  async fetchMask(id: string): Promise<Uint8Array> {
    const res = await this.request(`/api/samples/${encodeURIComponent(id)}/mask`);
    return new Uint8Array(await res.arrayBuffer());
  }

  async fetchImage(id: string): Promise<Uint8Array> {
    const res = await this.request(`/api/samples/${encodeURIComponent(id)}/image`);
    return new Uint8Array(await res.arrayBuffer());
  }

  async putMask(id: string, buffer: MaskBuffer, revision?: number): Promise<SampleRecord> {
    if (!MaskBuffer.isBinary(buffer.values())) {
      throw new ValidationError("mask buffer is not binary");
    }
    const png = encodeGrayPng(buffer.toGrayPixels(), buffer.width, buffer.height);
    const headers: Record<string, string> = { "content-type": "image/png" };
    if (revision !== undefined) headers["If-Match"] = String(revision);
    const res = await this.request(`/api/samples/${encodeURIComponent(id)}/mask`, {
      method: "PUT",
      headers,
      body: png as unknown as BodyInit,
    });
    return res.json();
  }

  async patchLabels(id: string, patch: LabelPatch, revision?: number): Promise<SampleRecord> {
    const allowed: Record<string, readonly string[]> = {
      blur_type: BLUR_TYPES,
      intensity: INTENSITIES,
      review_state: REVIEW_STATES,
    };
    for (const [key, value] of Object.entries(patch)) {
      const values = allowed[key];
      if (!values) throw new ValidationError(`unknown label field ${key}`);
      if (value !== undefined && !values.includes(value)) {
        throw new ValidationError(`${key} must be one of ${values.join(", ")}, got ${value}`);
      }
    }
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (revision !== undefined) headers["If-Match"] = String(revision);
    const res = await this.request(`/api/samples/${encodeURIComponent(id)}/labels`, {
      method: "PATCH",
      headers,
      body: JSON.stringify(patch),
    });
    return res.json();
  }

  async postEstimate(id: string, threshold: number): Promise<Uint8Array> {
    if (!(threshold >= 0 && threshold <= 1)) {
      throw new ValidationError(`threshold must lie in [0,1], got ${threshold}`);
    }
    const res = await this.request(`/api/samples/${encodeURIComponent(id)}/estimate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ threshold }),
    });
    return new Uint8Array(await res.arrayBuffer());
  }

  async getStats(): Promise<Stats> {
    const res = await this.request("/api/stats");
    return res.json();
  }
}
