import { mkdtempSync, writeFileSync, existsSync, readFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import { describe, expect, it } from 'vitest'
import { parseCsv, requireColumns } from '../src/csv.js'
import { renderFigure } from '../src/figures.js'
import { colormap, linearScale, logScale } from '../src/plot.js'

function makeRunDir(): string {
  const dir = mkdtempSync(join(tmpdir(), 'mlkan-fig-'))

  // metrics.csv with two level transitions
  const metrics = ['step,level,loss_total,loss_V,loss_B,loss_I,metric,lr,wall_ms']
  for (let s = 0; s < 30; s++) {
    const level = s < 10 ? 0 : s < 20 ? 1 : 2
    metrics.push(`${s},${level},${Math.exp(-s / 5)},,,,${Math.exp(-s / 6)},0.001,1.0`)
  }
  writeFileSync(join(dir, 'metrics.csv'), metrics.join('\n'))

  const eig = ['r,n,index,eigenvalue,sign_changes']
  const vec = ['r,n,rank,position,value']
  const dim = 12
  for (let i = 0; i < dim; i++) {
    eig.push(`1,10,${i},${(i + 1) ** 2},${i}`)
    for (const rank of [0, 1, 2, 3, 4, dim - 5, dim - 4, dim - 3, dim - 2, dim - 1]) {
      vec.push(`1,10,${rank},${i},${Math.sin(((rank + 1) * (i + 0.5) * Math.PI) / dim) / 4}`)
    }
  }
  writeFileSync(join(dir, 'eigen_report.csv'), eig.join('\n'))
  writeFileSync(join(dir, 'eigenvectors.csv'), vec.join('\n'))

  const bench = ['r,n,fast_ms_mean,fast_ms_std,cox_ms_mean,cox_ms_std,speedup,flop_ratio']
  for (const r of [1, 2, 3, 4]) {
    for (const n of [16, 32]) {
      bench.push(`${r},${n},1.0,0.05,${r * 0.9},0.08,${r * 0.9},${(n * r + r * r) / (n + r)}`)
    }
  }
  writeFileSync(join(dir, 'bench.csv'), bench.join('\n'))

  const fields = ['level,x,t,u,residual']
  const spectra = ['level,omega_x,omega_t,magnitude']
  const g = 8
  for (let level = 0; level < 4; level++) {
    for (let i = 0; i < g; i++) {
      for (let j = 0; j < g; j++) {
        const x = -1 + (2 * i) / (g - 1)
        const t = j / (g - 1)
        fields.push(`${level},${x},${t},${Math.tanh(x + level)},${0.1 / (level + 1)}`)
        spectra.push(`${level},${i - g / 2},${j - g / 2},${1e-2 / (level + 1) + i * 1e-4}`)
      }
    }
  }
  writeFileSync(join(dir, 'fields.csv'), fields.join('\n'))
  writeFileSync(join(dir, 'spectra.csv'), spectra.join('\n'))
  return dir
}

describe('csv', () => {
  it('parses header and rows', () => {
    const rows = parseCsv('a,b\n1,2\n3,4')
    expect(rows).toHaveLength(2)
    expect(rows[1].b).toBe('4')
  })

  it('fails loudly on missing columns', () => {
    const rows = parseCsv('a,b\n1,2')
    expect(() => requireColumns(rows, ['a', 'zz'], 'test.csv')).toThrow(/missing column "zz"/)
  })
})

describe('scales', () => {
  it('linear maps endpoints', () => {
    const s = linearScale([0, 10], [100, 200])
    expect(s(0)).toBe(100)
    expect(s(10)).toBe(200)
    expect(s.ticks().length).toBeGreaterThan(2)
  })

  it('log scale ticks are decades', () => {
    const s = logScale([1e-4, 1e0], [300, 0])
    expect(s.ticks()).toContain(1e-2)
    expect(s(1e-4)).toBeCloseTo(300)
  })

  it('colormap endpoints', () => {
    expect(colormap(0)).toBe('rgb(68,1,84)')
    expect(colormap(1)).toBe('rgb(253,231,37)')
  })
})

describe('figures', () => {
  const dir = makeRunDir()

  it('renders the eigen panel', () => {
    const svg = renderFigure(dir, 'eigs')
    expect(svg).toContain('<svg')
    expect(svg).toContain('first five eigenvectors')
    expect(svg).toContain('last five eigenvectors')
  })

  it('renders the speedup plot with error bars', () => {
    const svg = renderFigure(dir, 'speedup')
    expect(svg).toContain('speedup')
    expect(svg.match(/r=\d/g)?.length).toBeGreaterThanOrEqual(4)
  })

  it('renders convergence with level markers', () => {
    const svg = renderFigure(dir, 'convergence')
    const markers = svg.match(/level-marker/g) ?? []
    expect(markers).toHaveLength(2)
  })

  it('renders the four-row spectrum panel', () => {
    const svg = renderFigure(dir, 'spectrum')
    for (const level of [0, 1, 2, 3]) {
      expect(svg).toContain(`level ${level}: residual spectrum`)
    }
    expect(svg).toContain('axis cross-sections')
  })

  it('is deterministic', () => {
    expect(renderFigure(dir, 'convergence')).toBe(renderFigure(dir, 'convergence'))
  })

  it('fails on a missing file', () => {
    expect(() => renderFigure('/nonexistent-dir', 'convergence')).toThrow(/cannot read/)
  })
})
