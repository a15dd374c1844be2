/** Minimal deterministic SVG plotting: scales, axes, lines, heatmaps. */

export interface Scale {
  (v: number): number
  ticks(): number[]
  readonly domain: [number, number]
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain
  const [r0, r1] = range
  const span = d1 - d0 || 1
  const fn = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale
  ;(fn as any).domain = domain
  fn.ticks = () => {
    const step = tickStep(d0, d1)
    const out: number[] = []
    for (let t = Math.ceil(d0 / step) * step; t <= d1 + 1e-12; t += step) out.push(roundTick(t))
    return out
  }
  return fn
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const lo = Math.max(domain[0], 1e-300)
  const hi = Math.max(domain[1], lo * 10)
  const [r0, r1] = range
  const l0 = Math.log10(lo)
  const l1 = Math.log10(hi)
  const fn = ((v: number) => r0 + ((Math.log10(Math.max(v, 1e-300)) - l0) / (l1 - l0 || 1)) * (r1 - r0)) as Scale
  ;(fn as any).domain = [lo, hi]
  fn.ticks = () => {
    const out: number[] = []
    for (let e = Math.ceil(l0); e <= Math.floor(l1); e++) out.push(10 ** e)
    return out.length >= 2 ? out : [lo, hi]
  }
  return fn
}

function tickStep(lo: number, hi: number): number {
  const raw = (hi - lo) / 5 || 1
  const mag = 10 ** Math.floor(Math.log10(raw))
  const norm = raw / mag
  const step = norm < 1.5 ? 1 : norm < 3.5 ? 2 : norm < 7.5 ? 5 : 10
  return step * mag
}

function roundTick(t: number): number {
  return Math.abs(t) < 1e-12 ? 0 : Number(t.toPrecision(12))
}

export function fmt(v: number): string {
  if (v === 0) return '0'
  const a = Math.abs(v)
  if (a >= 1e4 || a < 1e-3) return v.toExponential(0)
  return String(Number(v.toPrecision(4)))
}

export class Svg {
  private parts: string[] = []
  constructor(readonly width: number, readonly height: number) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
      `<rect width="${width}" height="${height}" fill="white"/>`,
    )
  }

  raw(s: string): void {
    this.parts.push(s)
  }

  text(x: number, y: number, s: string, opts: string = ''): void {
    this.parts.push(`<text x="${r2(x)}" y="${r2(y)}" font-size="11" ${opts}>${escapeXml(s)}</text>`)
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke = '#333', extra = ''): void {
    this.parts.push(
      `<line x1="${r2(x1)}" y1="${r2(y1)}" x2="${r2(x2)}" y2="${r2(y2)}" stroke="${stroke}" ${extra}/>`,
    )
  }

  polyline(points: Array<[number, number]>, stroke: string, extra = ''): void {
    const pts = points.map(([x, y]) => `${r2(x)},${r2(y)}`).join(' ')
    this.parts.push(`<polyline points="${pts}" fill="none" stroke="${stroke}" ${extra}/>`)
  }

  rect(x: number, y: number, w: number, h: number, fill: string, extra = ''): void {
    this.parts.push(
      `<rect x="${r2(x)}" y="${r2(y)}" width="${r2(w)}" height="${r2(h)}" fill="${fill}" ${extra}/>`,
    )
  }

  circle(x: number, y: number, radius: number, fill: string): void {
    this.parts.push(`<circle cx="${r2(x)}" cy="${r2(y)}" r="${radius}" fill="${fill}"/>`)
  }

  render(): string {
    return this.parts.join('\n') + '\n</svg>\n'
  }
}

function r2(v: number): string {
  return (Math.round(v * 100) / 100).toString()
}

function escapeXml(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')
}

export const PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b']

/** Compact viridis-like colormap over [0, 1]. */
export function colormap(t: number): string {
  const stops: Array<[number, number, number]> = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
  ]
  const clamped = Math.min(1, Math.max(0, t))
  const pos = clamped * (stops.length - 1)
  const i = Math.min(stops.length - 2, Math.floor(pos))
  const f = pos - i
  const mix = stops[i].map((c, k) => Math.round(c + f * (stops[i + 1][k] - c)))
  return `rgb(${mix[0]},${mix[1]},${mix[2]})`
}

export interface Frame {
  x: Scale
  y: Scale
  left: number
  top: number
  w: number
  h: number
}

/** Draws axes with ticks and labels; the scales must already map into the
 * pixel box (x: [left, left+w], y: [top+h, top]). */
export function frame(
  svg: Svg,
  left: number,
  top: number,
  w: number,
  h: number,
  x: Scale,
  y: Scale,
  title: string,
  xlabel: string,
  ylabel: string,
): Frame {
  svg.line(left, top + h, left + w, top + h)
  svg.line(left, top, left, top + h)
  for (const t of x.ticks()) {
    const xp = x(t)
    svg.line(xp, top + h, xp, top + h + 4)
    svg.text(xp - 10, top + h + 16, fmt(t))
  }
  for (const t of y.ticks()) {
    const yp = y(t)
    svg.line(left - 4, yp, left, yp)
    svg.text(left - 42, yp + 3, fmt(t))
  }
  svg.text(left + w / 2 - 3 * title.length, top - 8, title, 'font-weight="bold"')
  svg.text(left + w / 2 - 3 * xlabel.length, top + h + 32, xlabel)
  svg.text(left - 46, top - 10, ylabel)
  return { x, y, left, top, w, h }
}
