import { FULL_TURN, STEP, UIState } from './types.js';

export type AdjustAction =
    | { kind: 'slider-set'; value: number }
    | { kind: 'cw' }
    | { kind: 'ccw' };

/** Snap an arbitrary slider value to the nearest 5-degree step in [0, 355]. */
export function snapToStep(value: number): number {
    const wrapped = ((value % FULL_TURN) + FULL_TURN) % FULL_TURN;
    return (Math.round(wrapped / STEP) * STEP) % FULL_TURN;
}

/** Apply a slider or fine-adjust action; the result is always a legal theta. */
export function adjust(theta: number, action: AdjustAction): number {
    switch (action.kind) {
        case 'slider-set':
            return snapToStep(action.value);
        case 'cw':
            return (theta + STEP) % FULL_TURN;
        case 'ccw':
            return (theta - STEP + FULL_TURN) % FULL_TURN;
    }
}

export function binOf(theta: number): number {
    return Math.round(theta / STEP) % (FULL_TURN / STEP);
}

export function initialState(): UIState {
    return {
        instance: null,
        theta: 0,
        gallery: [],
        status: 'idle',
        errorMessage: null,
        finished: false,
    };
}

export function isLegalTheta(theta: number): boolean {
    return Number.isInteger(theta) && theta >= 0 && theta <= 355 && theta % STEP === 0;
}
