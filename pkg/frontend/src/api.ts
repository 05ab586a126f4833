/** Thin typed client for the assessment service. */

import type {
  AssessmentPayload,
  KbInfo,
  KbSchema,
  SessionDocument,
} from './types'

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail)
  }
}

export class ApiClient {
  constructor(private readonly base: string, private readonly fetchFn: typeof fetch = fetch) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: body === undefined ? {} : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    if (!response.ok) {
      let detail = response.statusText
      try {
        const data = (await response.json()) as { detail?: string }
        if (data.detail) detail = data.detail
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail)
    }
    return (await response.json()) as T
  }

  listKbs(): Promise<KbInfo[]> {
    return this.request('GET', '/api/kbs')
  }

  kbSchema(kbId: string): Promise<KbSchema> {
    return this.request('GET', `/api/kbs/${encodeURIComponent(kbId)}/schema`)
  }

  createSession(kbIds: string[]): Promise<SessionDocument> {
    return this.request('POST', '/api/sessions', { kb_ids: kbIds })
  }

  submitAnswer(sessionId: string, kbId: string, attr: string, level: string): Promise<SessionDocument> {
    return this.request('PATCH', `/api/sessions/${sessionId}/answers`, {
      [kbId]: { [attr]: level },
    })
  }

  assessment(sessionId: string): Promise<AssessmentPayload> {
    return this.request('GET', `/api/sessions/${sessionId}/assessment`)
  }
}
