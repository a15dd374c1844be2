import { readFileSync } from 'fs'

export type Row = Record<string, string>

export function parseCsv(text: string): Row[] {
  const lines = text.trim().split(/\r?\n/)
  if (lines.length === 0) throw new Error('empty CSV')
  const header = lines[0].split(',')
  return lines.slice(1).map((line) => {
    const cells = line.split(',')
    const row: Row = {}
    header.forEach((name, i) => {
      row[name] = cells[i] ?? ''
    })
    return row
  })
}

export function readCsv(path: string): Row[] {
  let text: string
  try {
    text = readFileSync(path, 'utf8')
  } catch (err) {
    throw new Error(`cannot read ${path}: ${(err as Error).message}`)
  }
  return parseCsv(text)
}

/** Throws unless every named column exists; figures fail loudly on schema drift. */
export function requireColumns(rows: Row[], columns: string[], what: string): void {
  if (rows.length === 0) throw new Error(`${what}: no data rows`)
  for (const col of columns) {
    if (!(col in rows[0])) {
      throw new Error(`${what}: missing column "${col}" (have: ${Object.keys(rows[0]).join(', ')})`)
    }
  }
}

export function num(row: Row, col: string): number {
  const v = Number(row[col])
  if (Number.isNaN(v)) throw new Error(`non-numeric value "${row[col]}" in column ${col}`)
  return v
}
