/**
 * Toy-model file parsing and scoring.
 *
 * The file format is key/value text with 17-significant-digit floats, shared
 * with the Python toolkit so a model trained there can be served from here
 * with bit-identical parameters.
 */

export interface ScoringModel {
  readonly dim: number;
  /** Score one embedding matrix given as rows of length `dim`. */
  score(rows: number[][]): number;
}

export function stableLogistic(s: number): number {
  if (s >= 0) {
    return 1 / (1 + Math.exp(-s));
  }
  const t = Math.exp(s);
  return t / (1 + t);
}

function parseFloats(text: string): number[] {
  return text
    .trim()
    .split(/\s+/)
    .filter((t) => t.length > 0)
    .map((t) => {
      const v = Number(t);
      if (!Number.isFinite(v)) {
        throw new Error(`non-finite weight ${JSON.stringify(t)}`);
      }
      return v;
    });
}

function dot(a: number[], b: readonly number[]): number {
  let total = 0;
  for (let i = 0; i < a.length; i++) {
    total += a[i] * b[i];
  }
  return total;
}

class LinearBagModel implements ScoringModel {
  constructor(
    readonly dim: number,
    private readonly weights: number[],
    private readonly bias: number,
    private readonly link: string,
  ) {}

  score(rows: number[][]): number {
    let s = this.bias;
    for (const row of rows) {
      s += dot(row, this.weights);
    }
    return this.link === "identity" ? s : stableLogistic(s);
  }
}

class TwoLayerModel implements ScoringModel {
  constructor(
    readonly dim: number,
    private readonly hidden: number,
    private readonly hiddenWeights: number[], // row-major (hidden x dim)
    private readonly hiddenBias: number[],
    private readonly outputWeights: number[],
    private readonly outputBias: number,
  ) {}

  score(rows: number[][]): number {
    const pooled = new Array<number>(this.hidden).fill(0);
    for (const row of rows) {
      for (let h = 0; h < this.hidden; h++) {
        let pre = this.hiddenBias[h];
        const offset = h * this.dim;
        for (let j = 0; j < this.dim; j++) {
          pre += this.hiddenWeights[offset + j] * row[j];
        }
        pooled[h] += Math.tanh(pre);
      }
    }
    let s = this.outputBias;
    for (let h = 0; h < this.hidden; h++) {
      s += (this.outputWeights[h] * pooled[h]) / rows.length;
    }
    return stableLogistic(s);
  }
}

export function parseModel(text: string): ScoringModel {
  const fields = new Map<string, string>();
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (line.length === 0 || line.startsWith("#")) {
      continue;
    }
    const eq = line.indexOf("=");
    if (eq < 0) {
      throw new Error(`model file line is not 'key = value': ${JSON.stringify(line)}`);
    }
    fields.set(line.slice(0, eq).trim(), line.slice(eq + 1).trim());
  }
  const need = (key: string): string => {
    const value = fields.get(key);
    if (value === undefined) {
      throw new Error(`model file is missing key ${JSON.stringify(key)}`);
    }
    return value;
  };
  const kind = need("kind");
  const dim = Number(need("dim"));
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`bad model dimension ${JSON.stringify(fields.get("dim"))}`);
  }
  if (kind === "linear_bag") {
    const weights = parseFloats(need("weights"));
    if (weights.length !== dim) {
      throw new Error(`weights length ${weights.length} != dim ${dim}`);
    }
    return new LinearBagModel(dim, weights, Number(need("bias")), fields.get("link") ?? "logistic");
  }
  if (kind === "two_layer") {
    const hidden = Number(need("hidden"));
    const w1 = parseFloats(need("hidden_weights"));
    const b1 = parseFloats(need("hidden_bias"));
    const w2 = parseFloats(need("output_weights"));
    if (w1.length !== hidden * dim || b1.length !== hidden || w2.length !== hidden) {
      throw new Error("two-layer weight blocks have inconsistent sizes");
    }
    return new TwoLayerModel(dim, hidden, w1, b1, w2, Number(need("output_bias")));
  }
  throw new Error(`unknown model kind ${JSON.stringify(kind)}`);
}
