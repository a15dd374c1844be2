import { writeFileSync } from 'fs'
import { renderFigure, FigureId } from './figures.js'

const FIGURES: FigureId[] = ['eigs', 'speedup', 'convergence', 'spectrum']

function parseArgs(argv: string[]): { run: string; figure: FigureId; out: string } {
  const args: Record<string, string> = {}
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || argv[i + 1] === undefined) {
      throw new Error(`usage: render --run <dir> --figure <${FIGURES.join('|')}> --out <path>`)
    }
    args[key.slice(2)] = argv[i + 1]
  }
  const { run, figure, out } = args
  if (!run || !figure || !out) {
    throw new Error(`usage: render --run <dir> --figure <${FIGURES.join('|')}> --out <path>`)
  }
  if (!FIGURES.includes(figure as FigureId)) {
    throw new Error(`unknown figure "${figure}"; expected one of ${FIGURES.join(', ')}`)
  }
  return { run, figure: figure as FigureId, out }
}

try {
  const { run, figure, out } = parseArgs(process.argv.slice(2))
  writeFileSync(out, renderFigure(run, figure))
  console.log(`wrote ${figure} -> ${out}`)
} catch (err) {
  console.error((err as Error).message)
  process.exit(1)
}
