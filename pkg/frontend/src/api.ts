/**
 * Typed client for the annotation service's HTTP JSON API.
 *
 * Endpoints (all campaign state lives server-side):
 *   GET  /items/next?annotator=ID  -> 200 item | 204 queue exhausted
 *   POST /labels                   -> 201 | 409 duplicate | 422 invalid
 *   GET  /progress
 *   GET  /agreement
 */

export type Task = 'fakenews' | 'toxicity';

export interface Item {
  id: string;
  text: string;
  task: Task;
  source: string;
}

export interface LabelSubmission {
  item_id: string;
  annotator_id: string;
  stage1: string;
  stage2?: string[] | null;
}

export interface ProgressPayload {
  items_total: number;
  annotators: Record<string, number>;
}

export type ResolutionStatus = 'retained' | 'discarded';

export interface AgreementRow {
  item_id: string;
  labels: Record<string, string>;
  status: ResolutionStatus;
}

export interface AgreementSummary {
  retained: number;
  discarded: number;
  incomplete: number;
}

export interface AgreementPayload {
  complete_items: number;
  raw_agreement_rate: number | null;
  cohen_kappa: number | null;
  kappa_undefined: boolean;
  summary: AgreementSummary;
  items: AgreementRow[];
}

/** Error carrying the HTTP status; status 0 means the request never landed. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

export interface AnnotationApi {
  nextItem(annotator: string): Promise<Item | null>;
  submitLabel(body: LabelSubmission): Promise<void>;
  progress(): Promise<ProgressPayload>;
  agreement(): Promise<AgreementPayload>;
}

async function parseError(res: Response): Promise<ApiError> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.detail === 'string') detail = body.detail;
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(res.status, detail);
}

export class HttpApi implements AnnotationApi {
  constructor(private readonly baseUrl: string = '') {}

  private async get(path: string): Promise<Response> {
    let res: Response;
    try {
      res = await fetch(this.baseUrl + path);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok && res.status !== 204) throw await parseError(res);
    return res;
  }

  async nextItem(annotator: string): Promise<Item | null> {
    const res = await this.get(`/items/next?annotator=${encodeURIComponent(annotator)}`);
    if (res.status === 204) return null;
    return (await res.json()) as Item;
  }

  async submitLabel(body: LabelSubmission): Promise<void> {
    let res: Response;
    try {
      res = await fetch(this.baseUrl + '/labels', {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (res.status !== 201) throw await parseError(res);
  }

  async progress(): Promise<ProgressPayload> {
    return (await this.get('/progress')).json();
  }

  async agreement(): Promise<AgreementPayload> {
    return (await this.get('/agreement')).json();
  }
}

/** Stage-1 choices per task, in display order. */
export const STAGE1_CHOICES: Record<Task, [string, string]> = {
  fakenews: ['fake', 'real'],
  toxicity: ['toxic', 'non-toxic'],
};

/** The six selectable stage-2 toxicity categories. */
export const TOXICITY_CATEGORIES = [
  'abuse',
  'obscene',
  'insult',
  'identity-hate',
  'severe-toxic',
  'threat',
] as const;
