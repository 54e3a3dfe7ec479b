/** Shared request/response shapes of the inference service (JSON, snake_case). */

export interface Manifest {
  parts: string[];
  classes: string[];
  image_size: number;
  models_loaded: string[];
}

export interface Box {
  x0: number;
  y0: number;
  w: number;
  h: number;
}

export interface Keypoint {
  part: string;
  x: number;
  y: number;
}

export interface CompletedKeypoint extends Keypoint {
  v: number;
}

/** Exactly one of bbox / keypoints is present. */
export interface Location {
  bbox?: Box;
  keypoints?: Keypoint[];
}

export interface GenerateRequest {
  captions: string[];
  bbox?: Box;
  keypoints?: Keypoint[];
  num_samples?: number;
  seed?: number;
  interpolate?: {
    steps: number;
    from_location: Location;
    to_location: Location;
  };
}

export interface GenerateResponse {
  images: string[]; // base64 binary PPM, step-major when interpolating
  seed: number;
  steps: number;
}

export interface CompleteKeypointsRequest {
  captions: string[];
  observed?: Keypoint[];
  num_samples?: number;
  seed?: number;
}

export interface CompleteKeypointsResponse {
  keypoint_sets: CompletedKeypoint[][];
  seed: number;
}

export interface ServiceError {
  error: string;
  field: string | null;
}
