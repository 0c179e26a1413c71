const SVG_NS = 'http://www.w3.org/2000/svg';
const SIZE = 220;
const CENTER = SIZE / 2;
const RADIUS = 96;

/**
 * Clock-like dial with tick marks every 30 degrees and a red arrow whose
 * rotation always equals the current theta (0 points up, clockwise positive).
 */
export class Dial {
    readonly svg: SVGSVGElement;
    private arrow: SVGGElement;
    private label: SVGTextElement;

    constructor(doc: Document = document) {
        this.svg = doc.createElementNS(SVG_NS, 'svg') as SVGSVGElement;
        this.svg.setAttribute('viewBox', `0 0 ${SIZE} ${SIZE}`);
        this.svg.setAttribute('width', String(SIZE));
        this.svg.setAttribute('height', String(SIZE));
        this.svg.setAttribute('role', 'img');
        this.svg.setAttribute('aria-label', 'orientation dial');

        const face = doc.createElementNS(SVG_NS, 'circle');
        face.setAttribute('cx', String(CENTER));
        face.setAttribute('cy', String(CENTER));
        face.setAttribute('r', String(RADIUS));
        face.setAttribute('fill', '#fafafa');
        face.setAttribute('stroke', '#444');
        this.svg.appendChild(face);

        for (let deg = 0; deg < 360; deg += 30) {
            const tick = doc.createElementNS(SVG_NS, 'line');
            tick.setAttribute('x1', String(CENTER));
            tick.setAttribute('y1', String(CENTER - RADIUS));
            tick.setAttribute('x2', String(CENTER));
            tick.setAttribute('y2', String(CENTER - RADIUS + (deg % 90 === 0 ? 14 : 8)));
            tick.setAttribute('stroke', '#777');
            tick.setAttribute('transform', `rotate(${deg} ${CENTER} ${CENTER})`);
            this.svg.appendChild(tick);
        }

        this.arrow = doc.createElementNS(SVG_NS, 'g') as SVGGElement;
        this.arrow.setAttribute('id', 'dial-arrow');
        const shaft = doc.createElementNS(SVG_NS, 'line');
        shaft.setAttribute('x1', String(CENTER));
        shaft.setAttribute('y1', String(CENTER));
        shaft.setAttribute('x2', String(CENTER));
        shaft.setAttribute('y2', String(CENTER - RADIUS + 18));
        shaft.setAttribute('stroke', '#d22');
        shaft.setAttribute('stroke-width', '4');
        const head = doc.createElementNS(SVG_NS, 'path');
        head.setAttribute(
            'd',
            `M ${CENTER} ${CENTER - RADIUS + 8} l -7 14 l 14 0 z`,
        );
        head.setAttribute('fill', '#d22');
        this.arrow.appendChild(shaft);
        this.arrow.appendChild(head);
        this.svg.appendChild(this.arrow);

        this.label = doc.createElementNS(SVG_NS, 'text') as SVGTextElement;
        this.label.setAttribute('x', String(CENTER));
        this.label.setAttribute('y', String(SIZE - 4));
        this.label.setAttribute('text-anchor', 'middle');
        this.label.setAttribute('font-size', '14');
        this.svg.appendChild(this.label);

        this.render(0);
    }

    render(theta: number): void {
        this.arrow.setAttribute('transform', `rotate(${theta} ${CENTER} ${CENTER})`);
        this.label.textContent = `${theta}°`;
    }

    /** Current arrow rotation in degrees, read back from the DOM. */
    angle(): number {
        const t = this.arrow.getAttribute('transform') ?? '';
        const match = /rotate\((-?[\d.]+)/.exec(t);
        return match ? Number(match[1]) : NaN;
    }
}
