export type Label = "responsive" | "not_responsive" | "further_review";
export type ClusterLabel = Label | "untagged";

export interface ProjectSummary {
  project_id: string;
  name: string;
  corpus_root: string;
  created_at: string;
}

export interface RoundCounts {
  total: number;
  valid: number;
  invalid: number;
  excluded_prefilter: number;
  representatives: number;
  clustered_images: number;
}

export interface RoundMeta {
  round: number;
  status: "running" | "complete" | "failed";
  k: number;
  seed: number;
  created_at: string;
  finished_at?: string;
  counts?: RoundCounts;
  inertia?: number;
  iterations_run?: number;
  stage?: string;
  error?: string;
}

export interface ClusterSummary {
  cluster_index: number;
  size_representatives: number;
  size_total_images: number;
  medoid_image_id: string;
  sample_image_ids: string[];
  sample_thumbnails: string[];
  label: ClusterLabel;
  note: string;
  medoid_thumbnail: string;
}

export interface ClusterListing {
  round: number;
  k: number;
  clusters: ClusterSummary[];
}

export interface ClusterImage {
  image_id: string;
  path: string;
  thumbnail: string;
  distance: number;
  representative: boolean;
  width: number;
  height: number;
}

export interface ClusterImagesPage {
  cluster_index: number;
  label: ClusterLabel;
  note: string;
  total_images: number;
  offset: number;
  limit: number;
  images: ClusterImage[];
}

export interface TagEvent {
  seq: number;
  round: number;
  cluster_index: number;
  label: Label;
  note: string;
  author: string;
  timestamp: string;
}

export interface TagHistory {
  cluster_index: number;
  events: TagEvent[];
}

export interface SimilarNeighbor {
  image_id: string;
  path: string;
  thumbnail: string;
  distance: number;
  cluster_index: number;
  cluster_label: ClusterLabel;
}

export interface SimilarResponse {
  query: string;
  k: number;
  neighbors: SimilarNeighbor[];
}

export interface ReportRow {
  cluster_index: number;
  size_images: number;
  label: ClusterLabel;
  note: string;
  medoid_image_id: string;
  medoid_thumbnail: string;
}

export interface ReportTotals {
  images_responsive: number;
  images_not_responsive: number;
  images_further_review: number;
  images_untagged: number;
  images_excluded_prefilter: number;
  images_invalid: number;
}

export interface Report {
  project_id: string;
  round: number;
  rows: ReportRow[];
  totals: ReportTotals;
  images_scanned: number;
}

export interface RoundStats {
  round: number;
  status: string;
  k: number;
  clusters_tagged: number;
  clusters_untagged: number;
  images_resolved: number;
  images_pending: number;
  totals: ReportTotals;
}

export interface ProjectStats {
  project_id: string;
  rounds: RoundStats[];
  tag_events: number;
  first_tag_at: string | null;
  last_tag_at: string | null;
}
