import type {
  ClusterLabel,
  ClusterSummary,
  Report,
  SimilarNeighbor,
  TagEvent,
} from "../../src/types.js";

let hashCounter = 0;

export function fakeHash(): string {
  hashCounter += 1;
  return hashCounter.toString(16).padStart(64, "0");
}

export function summary(
  index: number,
  size: number,
  overrides: Partial<ClusterSummary> = {},
): ClusterSummary {
  return {
    cluster_index: index,
    size_representatives: size,
    size_total_images: size,
    medoid_image_id: `img-medoid-${index}`,
    sample_image_ids: [`img-medoid-${index}`, `img-s${index}a`, `img-s${index}b`],
    sample_thumbnails: [fakeHash(), fakeHash(), fakeHash()],
    label: "untagged",
    note: "",
    medoid_thumbnail: fakeHash(),
    ...overrides,
  };
}

export function neighbor(
  imageId: string,
  distance: number,
  clusterIndex = 0,
  label: ClusterLabel = "untagged",
): SimilarNeighbor {
  return {
    image_id: imageId,
    path: `d0/${imageId}.png`,
    thumbnail: fakeHash(),
    distance,
    cluster_index: clusterIndex,
    cluster_label: label,
  };
}

export function tagEvent(
  seq: number,
  clusterIndex: number,
  label: TagEvent["label"],
  note = "",
  author = "",
): TagEvent {
  return {
    seq,
    round: 1,
    cluster_index: clusterIndex,
    label,
    note,
    author,
    timestamp: `2026-08-23T12:00:${String(seq).padStart(2, "0")}+00:00`,
  };
}

export function report(rows: { index: number; size: number; label: ClusterLabel; note?: string }[], invalid = 0): Report {
  const totals = {
    images_responsive: 0,
    images_not_responsive: 0,
    images_further_review: 0,
    images_untagged: 0,
    images_excluded_prefilter: 0,
    images_invalid: invalid,
  };
  for (const row of rows) {
    if (row.label === "responsive") totals.images_responsive += row.size;
    else if (row.label === "not_responsive") totals.images_not_responsive += row.size;
    else if (row.label === "further_review") totals.images_further_review += row.size;
    else totals.images_untagged += row.size;
  }
  return {
    project_id: "p1",
    round: 1,
    rows: rows.map((row) => ({
      cluster_index: row.index,
      size_images: row.size,
      label: row.label,
      note: row.note ?? "",
      medoid_image_id: `img-medoid-${row.index}`,
      medoid_thumbnail: fakeHash(),
    })),
    totals,
    images_scanned:
      rows.reduce((acc, row) => acc + row.size, 0) + invalid,
  };
}
