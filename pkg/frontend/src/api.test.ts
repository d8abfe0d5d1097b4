import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, type FetchLike } from "./api.js";

interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** Fetch stub that records every call and replays canned responses. */
function recordingFetch(
  responses: Response[]
): { calls: RecordedCall[]; fetchFn: FetchLike } {
  const calls: RecordedCall[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      body:
        typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
    });
    const next = responses.shift();
    if (next === undefined) {
      throw new Error("no canned response left");
    }
    return next;
  };
  return { calls, fetchFn };
}

describe("ApiClient request shapes", () => {
  it("creates episodes with the documented body", async () => {
    const { calls, fetchFn } = recordingFetch([
      jsonResponse({ episode_id: "e1" }),
    ]);
    const client = new ApiClient("http://svc", fetchFn);
    await client.createEpisode({
      model_id: "patient_care",
      initial_values: { "patient-record": "rec-001" },
    });
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://svc/episodes");
    expect(calls[0].method).toBe("POST");
    expect(calls[0].body).toEqual({
      model_id: "patient_care",
      initial_values: { "patient-record": "rec-001" },
    });
  });

  it("chooses an activity via the choose endpoint", async () => {
    const { calls, fetchFn } = recordingFetch([jsonResponse({ ready: [] })]);
    const client = new ApiClient("http://svc", fetchFn);
    await client.choose("e1", "record_symptoms");
    expect(calls[0].url).toBe("http://svc/episodes/e1/choose");
    expect(calls[0].body).toEqual({ activity: "record_symptoms" });
  });

  it("submits actions with activity, op, inputs and params", async () => {
    const { calls, fetchFn } = recordingFetch([
      jsonResponse({ result: "e5", workspace: { entities: [] } }),
    ]);
    const client = new ApiClient("http://svc", fetchFn);
    await client.action("e1", "diagnose", "assign_value", ["e2"], {
      value: "fever",
    });
    expect(calls[0].url).toBe("http://svc/episodes/e1/action");
    expect(calls[0].body).toEqual({
      activity: "diagnose",
      op: "assign_value",
      inputs: ["e2"],
      params: { value: "fever" },
    });
  });

  it("sends retrieval probes with the requested k", async () => {
    const { calls, fetchFn } = recordingFetch([jsonResponse({ ranked: [] })]);
    const client = new ApiClient("http://svc", fetchFn);
    const probe = { elements: [{ typology_path: ["t", "u"], value: 1 }] };
    await client.retrieve(probe, 3);
    expect(calls[0].url).toBe("http://svc/retrieve");
    expect(calls[0].body).toEqual({ probe, k: 3 });
  });

  it("requests the event stream with a since cursor", async () => {
    const { calls, fetchFn } = recordingFetch([new Response("")]);
    const client = new ApiClient("http://svc", fetchFn);
    await client.eventStream("e1", 7);
    expect(calls[0].url).toBe("http://svc/episodes/e1/events?since=7");
    expect(calls[0].method).toBe("GET");
  });
});

describe("ApiClient error mapping", () => {
  it("turns non-ok bodies into ApiError with code and status", async () => {
    const { fetchFn } = recordingFetch([
      jsonResponse({ code: "NOT_READY", message: "activity not ready" }, 409),
    ]);
    const client = new ApiClient("http://svc", fetchFn);
    const err = await client.choose("e1", "diagnose").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("NOT_READY");
    expect(err.status).toBe(409);
    expect(err.message).toBe("activity not ready");
  });

  it("keeps the violated rule on integrity failures", async () => {
    const { fetchFn } = recordingFetch([
      jsonResponse(
        { code: "INTEGRITY_ERROR", message: "edit rejected", rule: "RemovedFinal" },
        422
      ),
    ]);
    const client = new ApiClient("http://svc", fetchFn);
    const err = await client
      .discretion("e1", { kind: "skip_activity" })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.rule).toBe("RemovedFinal");
  });

  it("keeps the failing constituent on composition failures", async () => {
    const { fetchFn } = recordingFetch([
      jsonResponse(
        {
          code: "CONSTITUENT_FAILURE",
          message: "stage failed",
          constituent: "extractor",
        },
        502
      ),
    ]);
    const client = new ApiClient("http://svc", fetchFn);
    const err = await client.getEpisode("e1").catch((e) => e);
    expect(err.constituent).toBe("extractor");
  });
});
