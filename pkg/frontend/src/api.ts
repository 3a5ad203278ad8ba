import type {
  ClusterImagesPage,
  ClusterListing,
  Label,
  ProjectStats,
  ProjectSummary,
  Report,
  RoundMeta,
  SimilarResponse,
  TagEvent,
  TagHistory,
} from "./types.js";

/** Error carrying the service's {code, message} body (status 0 = unreachable). */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

const JSON_HEADERS = { "content-type": "application/json" };

/** Thin typed client for the review service; `base` is "" when same-origin. */
export class ReviewApi {
  constructor(readonly base: string = "") {}

  url(path: string): string {
    return `${this.base}${path}`;
  }

  thumbnailUrl(contentHash: string): string {
    return this.url(`/api/thumbnails/${contentHash}`);
  }

  reportCsvUrl(projectId: string, round: number): string {
    return this.url(
      `/api/projects/${projectId}/rounds/${round}/report?format=csv`,
    );
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.url(path), init);
    } catch (cause) {
      throw new ApiError(0, "unreachable", `review service unreachable: ${cause}`);
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `HTTP ${response.status} on ${path}`;
      try {
        const body = await response.json();
        if (body && typeof body.code === "string") {
          code = body.code;
          message = typeof body.message === "string" ? body.message : message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  listProjects(): Promise<ProjectSummary[]> {
    return this.request("/api/projects");
  }

  project(projectId: string): Promise<ProjectSummary> {
    return this.request(`/api/projects/${projectId}`);
  }

  createProject(name: string, corpusRoot: string): Promise<ProjectSummary> {
    return this.request("/api/projects", {
      method: "POST",
      headers: JSON_HEADERS,
      body: JSON.stringify({ name, corpus_root: corpusRoot }),
    });
  }

  stats(projectId: string): Promise<ProjectStats> {
    return this.request(`/api/projects/${projectId}/stats`);
  }

  listRounds(projectId: string): Promise<RoundMeta[]> {
    return this.request(`/api/projects/${projectId}/rounds`);
  }

  round(projectId: string, round: number): Promise<RoundMeta> {
    return this.request(`/api/projects/${projectId}/rounds/${round}`);
  }

  startRound(projectId: string, body: Record<string, unknown>): Promise<{ round: number; status: string }> {
    return this.request(`/api/projects/${projectId}/rounds`, {
      method: "POST",
      headers: JSON_HEADERS,
      body: JSON.stringify(body),
    });
  }

  clusters(
    projectId: string,
    round: number,
    sort: "size" | "index" = "size",
  ): Promise<ClusterListing> {
    return this.request(
      `/api/projects/${projectId}/rounds/${round}/clusters?sort=${sort}`,
    );
  }

  clusterImages(
    projectId: string,
    round: number,
    clusterIndex: number,
    offset = 0,
    limit = 50,
  ): Promise<ClusterImagesPage> {
    const params = new URLSearchParams({
      offset: String(offset),
      limit: String(limit),
    });
    return this.request(
      `/api/projects/${projectId}/rounds/${round}/clusters/${clusterIndex}/images?${params}`,
    );
  }

  tagCluster(
    projectId: string,
    round: number,
    clusterIndex: number,
    label: Label,
    note = "",
    author = "",
  ): Promise<TagEvent> {
    return this.request(
      `/api/projects/${projectId}/rounds/${round}/clusters/${clusterIndex}/tag`,
      {
        method: "PUT",
        headers: JSON_HEADERS,
        body: JSON.stringify({ label, note, author }),
      },
    );
  }

  tagHistory(
    projectId: string,
    round: number,
    clusterIndex: number,
  ): Promise<TagHistory> {
    return this.request(
      `/api/projects/${projectId}/rounds/${round}/clusters/${clusterIndex}/tags`,
    );
  }

  report(projectId: string, round: number): Promise<Report> {
    return this.request(`/api/projects/${projectId}/rounds/${round}/report`);
  }

  similar(
    projectId: string,
    round: number,
    imageId: string,
    k = 50,
  ): Promise<SimilarResponse> {
    return this.request(
      `/api/projects/${projectId}/rounds/${round}/similar/${imageId}?k=${k}`,
    );
  }
}
