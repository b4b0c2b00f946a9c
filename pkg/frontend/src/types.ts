export interface SampleRecord {
  id: string;
  blur_type: string;
  intensity: string;
  source: string;
  review_state: string;
  revision: number;
  fraction: number;
  size_category: string;
  width: number;
  height: number;
}

export interface SamplePage {
  total: number;
  page: number;
  page_size: number;
  samples: SampleRecord[];
}

export interface Stats {
  total: number;
  by_review_state: Record<string, number>;
  by_blur_type: Record<string, number>;
  by_intensity: Record<string, number>;
  by_size_category: Record<string, number>;
}

export interface LabelPatch {
  blur_type?: string;
  intensity?: string;
  review_state?: string;
}

export const BLUR_TYPES = ["defocus", "motion", "none"] as const;
export const INTENSITIES = ["little", "middle", "heavy", "unlabeled"] as const;
export const REVIEW_STATES = ["auto", "human_verified", "rejected"] as const;
export const SIZE_CATEGORIES = ["small", "medium", "large"] as const;

/** Shown next to the intensity picker so labelers apply the same criteria. */
export const INTENSITY_RUBRIC: Record<string, string> = {
  little: "minimal edge and texture loss",
  middle: "noticeable edge overlap and significant texture loss",
  heavy: "extensive edge loss and almost complete texture elimination",
};
