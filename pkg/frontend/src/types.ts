/** Wire types of the assessment service API. */

export interface KbStats {
  attribute_count: number
  input_count: number
  derived_count: number
  hierarchical_rule_count: number
  flat_tuple_count: number
  max_depth: number
}

export interface KbInfo {
  id: string
  version: number
  stats: KbStats
}

export interface SchemaInput {
  name: string
  scale: string[]
  question: string
  help: string[]
}

export interface KbSchema {
  inputs: SchemaInput[]
}

export interface SessionDocument {
  schema_version: number
  id: string
  kb_ids: string[]
  answers: Record<string, Record<string, string>>
  created_at: string
  updated_at: string
}

export type FlagStateName = 'triggered' | 'potential' | 'clear'
export type SeverityName = 'info' | 'warning' | 'critical'

export interface RedFlagEntry {
  id: string
  state: FlagStateName
  severity: SeverityName
  message: string
}

export interface RiskContribution {
  attribute: string
  weight: number
  level: string
  score: number
}

export interface RiskSection {
  score: number | null
  coverage: number
  contributions: RiskContribution[]
}

export interface ValuationCategoryEntry {
  name: string
  raw: number
  share: number
  confidence: number
}

export interface NextQuestion {
  kb_id: string
  attr: string
  question: string
}

export interface AssessmentPayload {
  values: Record<string, Record<string, string>>
  unknowns: Record<string, string[]>
  red_flags: RedFlagEntry[]
  risk: RiskSection
  valuation: { categories: ValuationCategoryEntry[] }
  next_questions: NextQuestion[]
}
