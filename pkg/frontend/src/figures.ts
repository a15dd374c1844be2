import { join } from 'path'
import { num, readCsv, requireColumns, Row } from './csv.js'
import { colormap, fmt, frame, linearScale, logScale, PALETTE, Svg } from './plot.js'

export type FigureId = 'eigs' | 'speedup' | 'convergence' | 'spectrum'

export function renderFigure(runDir: string, figure: FigureId): string {
  switch (figure) {
    case 'eigs':
      return eigsPanel(runDir)
    case 'speedup':
      return speedupPlot(runDir)
    case 'convergence':
      return convergencePlot(runDir)
    case 'spectrum':
      return spectrumPanel(runDir)
    default:
      throw new Error(`unknown figure id "${figure}"`)
  }
}

/** Eigenvalues of A^T A (log scale) plus the first and last five eigenvectors. */
function eigsPanel(runDir: string): string {
  const report = readCsv(join(runDir, 'eigen_report.csv'))
  requireColumns(report, ['r', 'n', 'index', 'eigenvalue', 'sign_changes'], 'eigen_report.csv')
  const vectors = readCsv(join(runDir, 'eigenvectors.csv'))
  requireColumns(vectors, ['r', 'n', 'rank', 'position', 'value'], 'eigenvectors.csv')

  const r = num(vectors[0], 'r')
  const n = Math.max(...vectors.map((row) => num(row, 'n')))
  const evals = report
    .filter((row) => num(row, 'r') === r && num(row, 'n') === n)
    .map((row) => ({ index: num(row, 'index'), value: num(row, 'eigenvalue') }))
  if (evals.length === 0) throw new Error(`no eigenvalues for r=${r}, n=${n}`)
  const vecs = vectors.filter((row) => num(row, 'r') === r && num(row, 'n') === n)

  const svg = new Svg(1020, 300)
  const positive = evals.filter((e) => e.value > 0).map((e) => e.value)
  const ex = linearScale([0, evals.length - 1], [60, 330])
  const ey = logScale([Math.min(...positive), Math.max(...positive)], [250, 40])
  frame(svg, 60, 40, 270, 210, ex, ey, `eigenvalues (r=${r}, n=${n})`, 'index', 'value')
  svg.polyline(
    evals.map((e) => [ex(e.index), ey(Math.max(e.value, Math.min(...positive)))]),
    PALETTE[0],
    'stroke-width="1.5"',
  )

  const dim = Math.max(...vecs.map((row) => num(row, 'position'))) + 1
  const panels: Array<[string, number[]]> = [
    ['first five eigenvectors', [0, 1, 2, 3, 4]],
    ['last five eigenvectors', [dim - 5, dim - 4, dim - 3, dim - 2, dim - 1]],
  ]
  panels.forEach(([title, ranks], pi) => {
    const left = 400 + pi * 320
    const px = linearScale([0, dim - 1], [left, left + 270])
    const py = linearScale([-0.5, 0.5], [250, 40])
    frame(svg, left, 40, 270, 210, px, py, title as string, 'position', '')
    ;(ranks as number[]).forEach((rank, ci) => {
      const pts = vecs
        .filter((row) => num(row, 'rank') === rank)
        .sort((a, b) => num(a, 'position') - num(b, 'position'))
        .map((row): [number, number] => [px(num(row, 'position')), py(num(row, 'value'))])
      if (pts.length) svg.polyline(pts, PALETTE[ci % PALETTE.length], 'stroke-width="1.2"')
    })
  })
  return svg.render()
}

/** Wallclock speedup of the change-of-basis path vs Cox-de Boor, per order. */
function speedupPlot(runDir: string): string {
  const rows = readCsv(join(runDir, 'bench.csv'))
  requireColumns(
    rows,
    ['r', 'n', 'fast_ms_mean', 'fast_ms_std', 'cox_ms_mean', 'cox_ms_std', 'speedup'],
    'bench.csv',
  )
  const orders = [...new Set(rows.map((row) => num(row, 'r')))].sort((a, b) => a - b)
  const ns = [...new Set(rows.map((row) => num(row, 'n')))].sort((a, b) => a - b)
  const speedups = rows.map((row) => num(row, 'speedup'))

  const svg = new Svg(520, 340)
  const x = linearScale([Math.min(...ns), Math.max(...ns)], [70, 460])
  const y = linearScale([0, Math.max(...speedups) * 1.15], [280, 40])
  frame(svg, 70, 40, 390, 240, x, y, 'forward+backward speedup', 'knot intervals n', 'speedup')
  svg.line(70, y(1), 460, y(1), '#999', 'stroke-dasharray="4 3"')
  orders.forEach((r, ci) => {
    const sel = rows
      .filter((row) => num(row, 'r') === r)
      .sort((a, b) => num(a, 'n') - num(b, 'n'))
    const pts = sel.map((row): [number, number] => [x(num(row, 'n')), y(num(row, 'speedup'))])
    svg.polyline(pts, PALETTE[ci % PALETTE.length], 'stroke-width="1.5"')
    sel.forEach((row) => {
      const cx = x(num(row, 'n'))
      const s = num(row, 'speedup')
      // first-order error propagation of the timing ratio
      const rel =
        num(row, 'cox_ms_std') / num(row, 'cox_ms_mean') +
        num(row, 'fast_ms_std') / num(row, 'fast_ms_mean')
      svg.line(cx, y(s * (1 - rel)), cx, y(s * (1 + rel)), PALETTE[ci % PALETTE.length])
      svg.circle(cx, y(s), 3, PALETTE[ci % PALETTE.length])
    })
    svg.text(468, y(num(sel[sel.length - 1], 'speedup')) + 4, `r=${r}`, `fill="${PALETTE[ci % PALETTE.length]}"`)
  })
  return svg.render()
}

/** Training loss vs step with vertical markers at level transitions. */
function convergencePlot(runDir: string): string {
  const rows = readCsv(join(runDir, 'metrics.csv'))
  requireColumns(rows, ['step', 'level', 'loss_total', 'metric', 'lr'], 'metrics.csv')
  const steps = rows.map((row) => num(row, 'step'))
  const losses = rows.map((row) => num(row, 'loss_total'))
  const metrics = rows.map((row) => num(row, 'metric'))

  const svg = new Svg(560, 360)
  const x = linearScale([0, Math.max(...steps)], [70, 500])
  const lo = Math.min(...losses.filter((v) => v > 0), ...metrics.filter((v) => v > 0))
  const hi = Math.max(...losses, ...metrics)
  const y = logScale([lo, hi], [300, 40])
  frame(svg, 70, 40, 430, 260, x, y, 'training history', 'step', 'loss')
  svg.polyline(
    rows.map((row): [number, number] => [x(num(row, 'step')), y(num(row, 'loss_total'))]),
    PALETTE[0],
    'stroke-width="1.5"',
  )
  svg.polyline(
    rows.map((row): [number, number] => [x(num(row, 'step')), y(num(row, 'metric'))]),
    PALETTE[1],
    'stroke-width="1.2" stroke-dasharray="5 3"',
  )
  let previous = rows[0]['level']
  for (const row of rows) {
    if (row['level'] !== previous) {
      const xp = x(num(row, 'step'))
      svg.line(xp, 40, xp, 300, '#888', 'stroke-dasharray="3 3" class="level-marker"')
      previous = row['level']
    }
  }
  svg.text(380, 52, 'loss', `fill="${PALETTE[0]}"`)
  svg.text(380, 66, 'metric', `fill="${PALETTE[1]}"`)
  return svg.render()
}

/** Four-row panel: per level, solution heatmap, residual spectrum heatmap,
 * and the axis cross-sections; heatmap columns share one colorbar. */
function spectrumPanel(runDir: string): string {
  const fields = readCsv(join(runDir, 'fields.csv'))
  requireColumns(fields, ['level', 'x', 't', 'u', 'residual'], 'fields.csv')
  const spectra = readCsv(join(runDir, 'spectra.csv'))
  requireColumns(spectra, ['level', 'omega_x', 'omega_t', 'magnitude'], 'spectra.csv')

  const levels = [...new Set(spectra.map((row) => row['level']))].sort(
    (a, b) => Number(a) - Number(b),
  )
  const rowH = 230
  const svg = new Svg(1080, 60 + rowH * levels.length + 60)

  const uAll = fields.map((row) => num(row, 'u'))
  const uRange: [number, number] = [Math.min(...uAll), Math.max(...uAll)]
  const magAll = spectra.map((row) => Math.log10(num(row, 'magnitude') + 1e-12))
  const magRange: [number, number] = [Math.min(...magAll), Math.max(...magAll)]

  levels.forEach((level, li) => {
    const top = 50 + li * rowH
    heatmap(
      svg, 70, top, 240, 170,
      fields.filter((row) => row['level'] === level),
      'x', 't', 'u',
      (v) => (v - uRange[0]) / (uRange[1] - uRange[0] || 1),
      `level ${level}: solution`,
    )
    heatmap(
      svg, 400, top, 240, 170,
      spectra.filter((row) => row['level'] === level),
      'omega_x', 'omega_t', 'magnitude',
      (v) => (Math.log10(v + 1e-12) - magRange[0]) / (magRange[1] - magRange[0] || 1),
      `level ${level}: residual spectrum (log)`,
    )
    crossSections(svg, 730, top, 280, 170, spectra.filter((row) => row['level'] === level))
  })
  colorbar(svg, 70, 60 + rowH * levels.length, 240, uRange, 'u')
  colorbar(svg, 400, 60 + rowH * levels.length, 240, magRange, 'log10 |spectrum|')
  return svg.render()
}

function heatmap(
  svg: Svg,
  left: number,
  top: number,
  w: number,
  h: number,
  rows: Row[],
  xcol: string,
  ycol: string,
  vcol: string,
  normalize: (v: number) => number,
  title: string,
): void {
  const xs = [...new Set(rows.map((row) => num(row, xcol)))].sort((a, b) => a - b)
  const ys = [...new Set(rows.map((row) => num(row, ycol)))].sort((a, b) => a - b)
  const cw = w / xs.length
  const ch = h / ys.length
  const xi = new Map(xs.map((v, i) => [v, i]))
  const yi = new Map(ys.map((v, i) => [v, i]))
  for (const row of rows) {
    const i = xi.get(num(row, xcol))!
    const j = yi.get(num(row, ycol))!
    const t = normalize(num(row, vcol))
    svg.rect(left + i * cw, top + h - (j + 1) * ch, cw + 0.5, ch + 0.5, colormap(t))
  }
  svg.text(left, top - 8, title, 'font-weight="bold"')
  svg.text(left, top + h + 14, `${xcol}: [${fmt(xs[0])}, ${fmt(xs[xs.length - 1])}]`)
}

function crossSections(svg: Svg, left: number, top: number, w: number, h: number, rows: Row[]): void {
  const atZeroT = rows
    .filter((row) => num(row, 'omega_t') === 0)
    .sort((a, b) => num(a, 'omega_x') - num(b, 'omega_x'))
  const atZeroX = rows
    .filter((row) => num(row, 'omega_x') === 0)
    .sort((a, b) => num(a, 'omega_t') - num(b, 'omega_t'))
  const mags = [...atZeroT, ...atZeroX].map((row) => num(row, 'magnitude')).filter((v) => v > 0)
  if (mags.length === 0) throw new Error('cross-sections are empty')
  const freqs = atZeroT.map((row) => num(row, 'omega_x'))
  const x = linearScale([Math.min(...freqs), Math.max(...freqs)], [left, left + w])
  const y = logScale([Math.min(...mags), Math.max(...mags)], [top + h, top])
  frame(svg, left, top, w, h, x, y, 'axis cross-sections', 'frequency', '')
  svg.polyline(
    atZeroT.map((row): [number, number] => [
      x(num(row, 'omega_x')),
      y(Math.max(num(row, 'magnitude'), Math.min(...mags))),
    ]),
    PALETTE[0],
    'stroke-width="1.2"',
  )
  svg.polyline(
    atZeroX.map((row): [number, number] => [
      x(num(row, 'omega_t')),
      y(Math.max(num(row, 'magnitude'), Math.min(...mags))),
    ]),
    PALETTE[1],
    'stroke-width="1.2" stroke-dasharray="4 2"',
  )
  svg.text(left + w - 90, top + 12, 'omega_t = 0', `fill="${PALETTE[0]}"`)
  svg.text(left + w - 90, top + 26, 'omega_x = 0', `fill="${PALETTE[1]}"`)
}

function colorbar(svg: Svg, left: number, top: number, w: number, range: [number, number], label: string): void {
  const steps = 60
  for (let i = 0; i < steps; i++) {
    svg.rect(left + (i * w) / steps, top, w / steps + 0.5, 12, colormap(i / (steps - 1)))
  }
  svg.text(left, top + 26, fmt(range[0]))
  svg.text(left + w - 30, top + 26, fmt(range[1]))
  svg.text(left + w / 2 - 3 * label.length, top + 26, label)
}
