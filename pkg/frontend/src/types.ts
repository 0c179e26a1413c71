export interface InstanceDescriptor {
    instance_id: string;
    image_ref: string;
    image_url: string;
    crop_url: string;
    bbox: [number, number, number, number];
}

export interface GalleryEntry {
    instance_id: string;
    crop_url: string;
    theta_deg: number;
    labeler_id: string;
    timestamp: string;
}

export interface ProgressCounters {
    queued: number;
    assigned: number;
    done: number;
    served: number;
    labeled: number;
}

export type SubmissionStatus = 'idle' | 'in-flight' | 'error' | 'done';

export interface UIState {
    instance: InstanceDescriptor | null;
    theta: number; // always a multiple of 5 in [0, 355]
    gallery: GalleryEntry[];
    status: SubmissionStatus;
    errorMessage: string | null;
    finished: boolean;
}

export const STEP = 5;
export const FULL_TURN = 360;
