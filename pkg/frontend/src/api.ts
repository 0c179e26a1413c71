import { GalleryEntry, InstanceDescriptor, ProgressCounters } from './types.js';

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

async function detailOf(resp: Response): Promise<string> {
    try {
        const body = await resp.json();
        return typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail);
    } catch {
        return resp.statusText;
    }
}

export class AnnotationApi {
    constructor(private baseUrl: string = '') {}

    async createSession(labelerId: string): Promise<string> {
        const resp = await fetch(`${this.baseUrl}/sessions`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ labeler_id: labelerId }),
        });
        if (!resp.ok) {
            throw new ApiError(resp.status, await detailOf(resp));
        }
        const body = await resp.json();
        return body.session_id;
    }

    /** Next unlabeled instance, or null when the queue is exhausted (204). */
    async nextInstance(sessionId: string): Promise<InstanceDescriptor | null> {
        const resp = await fetch(
            `${this.baseUrl}/instances/next?session=${encodeURIComponent(sessionId)}`,
        );
        if (resp.status === 204) {
            return null;
        }
        if (!resp.ok) {
            throw new ApiError(resp.status, await detailOf(resp));
        }
        return (await resp.json()) as InstanceDescriptor;
    }

    async postLabel(instanceId: string, thetaDeg: number, labelerId: string): Promise<void> {
        const resp = await fetch(`${this.baseUrl}/labels`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({
                instance_id: instanceId,
                theta_deg: thetaDeg,
                labeler_id: labelerId,
            }),
        });
        if (!resp.ok) {
            throw new ApiError(resp.status, await detailOf(resp));
        }
    }

    async fetchExamples(bin: number, limit = 8, signal?: AbortSignal): Promise<GalleryEntry[]> {
        const resp = await fetch(`${this.baseUrl}/examples?bin=${bin}&limit=${limit}`, { signal });
        if (!resp.ok) {
            throw new ApiError(resp.status, await detailOf(resp));
        }
        return (await resp.json()) as GalleryEntry[];
    }

    async progress(sessionId: string): Promise<ProgressCounters> {
        const resp = await fetch(
            `${this.baseUrl}/progress?session=${encodeURIComponent(sessionId)}`,
        );
        if (!resp.ok) {
            throw new ApiError(resp.status, await detailOf(resp));
        }
        return (await resp.json()) as ProgressCounters;
    }
}
