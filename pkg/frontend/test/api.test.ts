import { describe, expect, it } from "vitest";

import { ApiError, CurationApi, ValidationError } from "../src/api.js";
import { BLUR, MaskBuffer } from "../src/maskBuffer.js";

interface Captured {
  url: string;
  init?: RequestInit;
}

function mockApi(status = 200, body: unknown = {}) {
  const calls: Captured[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { api: new CurationApi("http://svc", fetchFn), calls };
}

describe("CurationApi", () => {
  it("builds list queries from filters", async () => {
    const { api, calls } = mockApi(200, { total: 0, page: 1, page_size: 50, samples: [] });
    await api.listSamples({ state: "auto", type: "defocus", page: 2, pageSize: 10 });
    expect(calls[0].url).toBe("http://svc/api/samples?state=auto&type=defocus&page=2&page_size=10");
  });

  it("PUTs masks with the revision in If-Match", async () => {
    const { api, calls } = mockApi(200, { id: "a", revision: 3 });
    const buf = new MaskBuffer(4, 4);
    buf.beginStroke();
    buf.paint(1, 1, 1, BLUR);
    await api.putMask("a", buf, 2);
    expect(calls[0].init?.method).toBe("PUT");
    expect((calls[0].init?.headers as Record<string, string>)["If-Match"]).toBe("2");
    const sent = calls[0].init?.body as Uint8Array;
    expect(sent[0]).toBe(0x89); // PNG payload
  });

  it("rejects invalid label values before any network call", async () => {
    const { api, calls } = mockApi();
    await expect(api.patchLabels("a", { intensity: "extreme" })).rejects.toThrow(ValidationError);
    await expect(api.patchLabels("a", { rating: "5" } as never)).rejects.toThrow(ValidationError);
    expect(calls.length).toBe(0);
  });

  it("rejects out-of-range thresholds before any network call", async () => {
    const { api, calls } = mockApi();
    await expect(api.postEstimate("a", 1.5)).rejects.toThrow(ValidationError);
    expect(calls.length).toBe(0);
  });

  it("surfaces the server's rejection reason", async () => {
    const { api } = mockApi(422, { detail: "mask not binary" });
    const buf = new MaskBuffer(4, 4);
    const err = await api.putMask("a", buf).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.detail).toBe("mask not binary");
  });

  it("PATCHes only known enum values", async () => {
    const { api, calls } = mockApi(200, { id: "a" });
    await api.patchLabels("a", { intensity: "heavy", review_state: "human_verified" });
    expect(calls[0].init?.method).toBe("PATCH");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      intensity: "heavy",
      review_state: "human_verified",
    });
  });
});
