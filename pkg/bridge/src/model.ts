/**
 * In-context Bayesian regressor behind the bridge.
 *
 * The model is a normal-inverse-gamma linear regressor: it "fits" purely in
 * context (one pass over the train rows, no iterative training) and returns
 * the exact posterior-predictive log density of each estimation row, which is
 * Student-t. Columns are standardized by train statistics and the per-row
 * Jacobian of the child rescaling is subtracted, so densities are reported in
 * the original units. There is no discretized output head to integrate: the
 * predictive density is evaluated in closed form.
 *
 * The algebra deliberately matches the engine's built-in conjugate backend,
 * so side-by-side gaps on the same query are floating-point only.
 */

export interface PriorConfig {
  /** coefficient prior mean (every coordinate) */
  mean: number;
  /** coefficient prior precision, scaled by the noise variance */
  precision: number;
  /** inverse-gamma shape of the noise variance prior */
  shape: number;
  /** inverse-gamma rate of the noise variance prior */
  rate: number;
}

export const DEFAULT_PRIOR: PriorConfig = { mean: 0, precision: 1, shape: 2, rate: 1 };

const LANCZOS = [
  0.99999999999980993, 676.5203681218851, -1259.1392167224028, 771.32342877765313,
  -176.61502916214059, 12.507343278686905, -0.13857109526572012,
  9.9843695780195716e-6, 1.5056327351493116e-7,
];

/** Log gamma via the Lanczos series (g=7), accurate to ~1e-13 relative. */
export function lgamma(x: number): number {
  if (x < 0.5) {
    // reflection keeps the series on the well-conditioned side
    return Math.log(Math.PI / Math.sin(Math.PI * x)) - lgamma(1 - x);
  }
  const z = x - 1;
  let acc = LANCZOS[0]!;
  for (let i = 1; i < LANCZOS.length; i++) {
    acc += LANCZOS[i]! / (z + i);
  }
  const t = z + 7.5;
  return 0.5 * Math.log(2 * Math.PI) + (z + 0.5) * Math.log(t) - t + Math.log(acc);
}

export function studentTLogPdf(x: number, df: number, loc: number, scale: number): number {
  const u = (x - loc) / scale;
  return (
    lgamma((df + 1) / 2) -
    lgamma(df / 2) -
    0.5 * Math.log(df * Math.PI) -
    Math.log(scale) -
    ((df + 1) / 2) * Math.log1p((u * u) / df)
  );
}

/** Per-column mean and population std from train rows; tiny stds clamp to 1. */
function trainStats(rows: number[][], col: number): { mean: number; std: number } {
  const n = rows.length;
  let sum = 0;
  for (const row of rows) sum += row[col]!;
  const mean = sum / n;
  let ss = 0;
  for (const row of rows) {
    const d = row[col]! - mean;
    ss += d * d;
  }
  const std = Math.sqrt(ss / n);
  return { mean, std: std > 1e-12 ? std : 1 };
}

/** Lower-triangular Cholesky factor of a symmetric positive-definite matrix. */
function cholesky(a: number[][]): number[][] {
  const k = a.length;
  const l: number[][] = Array.from({ length: k }, () => new Array<number>(k).fill(0));
  for (let i = 0; i < k; i++) {
    for (let j = 0; j <= i; j++) {
      let s = a[i]![j]!;
      for (let m = 0; m < j; m++) s -= l[i]![m]! * l[j]![m]!;
      if (i === j) {
        if (s <= 0) throw new Error("posterior precision is not positive definite");
        l[i]![i] = Math.sqrt(s);
      } else {
        l[i]![j] = s / l[j]![j]!;
      }
    }
  }
  return l;
}

/** Solve (L L^T) x = b given the Cholesky factor. */
function cholSolve(l: number[][], b: number[]): number[] {
  const k = l.length;
  const y = new Array<number>(k).fill(0);
  for (let i = 0; i < k; i++) {
    let s = b[i]!;
    for (let m = 0; m < i; m++) s -= l[i]![m]! * y[m]!;
    y[i] = s / l[i]![i]!;
  }
  const x = new Array<number>(k).fill(0);
  for (let i = k - 1; i >= 0; i--) {
    let s = y[i]!;
    for (let m = i + 1; m < k; m++) s -= l[m]![i]! * x[m]!;
    x[i] = s / l[i]![i]!;
  }
  return x;
}

export interface Prediction {
  total: number;
  perRow: number[];
}

/**
 * Posterior-predictive log density of the estimation rows given train rows.
 *
 * Both matrices carry the parent columns first and the child last. With no
 * parents the regression is intercept-only, which is the unconditional
 * Bayesian mean/variance path for the child.
 */
export function predictLogDensity(
  train: number[][],
  est: number[][],
  prior: PriorConfig = DEFAULT_PRIOR,
): Prediction {
  const width = train[0]!.length;
  const nParents = width - 1;
  const n = train.length;
  const k = nParents + 1; // intercept plus parents

  const stats = Array.from({ length: width }, (_, c) => trainStats(train, c));
  const z = (row: number[], c: number) => (row[c]! - stats[c]!.mean) / stats[c]!.std;
  const design = (row: number[]): number[] => {
    const x = new Array<number>(k);
    x[0] = 1;
    for (let c = 0; c < nParents; c++) x[c + 1] = z(row, c);
    return x;
  };

  // lam_n = precision*I + X^T X, mu_n = lam_n^{-1}(precision*mean*1 + X^T y)
  const lamN: number[][] = Array.from({ length: k }, (_, i) =>
    Array.from({ length: k }, (_, j) => (i === j ? prior.precision : 0)),
  );
  const rhs = new Array<number>(k).fill(prior.precision * prior.mean);
  let yy = 0;
  for (const row of train) {
    const x = design(row);
    const y = z(row, nParents);
    yy += y * y;
    for (let i = 0; i < k; i++) {
      rhs[i]! += x[i]! * y;
      for (let j = 0; j <= i; j++) lamN[i]![j]! += x[i]! * x[j]!;
    }
  }
  for (let i = 0; i < k; i++) {
    for (let j = i + 1; j < k; j++) lamN[i]![j] = lamN[j]![i]!;
  }

  const l = cholesky(lamN);
  const muN = cholSolve(l, rhs);
  const aN = prior.shape + n / 2;
  let quad = 0; // mu_n^T lam_n mu_n via the solved system: mu_n . rhs
  for (let i = 0; i < k; i++) quad += muN[i]! * rhs[i]!;
  const prior0 = k * prior.precision * prior.mean * prior.mean;
  const bN = prior.rate + 0.5 * (yy + prior0 - quad);

  const df = 2 * aN;
  const logYStd = Math.log(stats[nParents]!.std);
  const perRow: number[] = [];
  let total = 0;
  for (const row of est) {
    const x = design(row);
    let loc = 0;
    for (let i = 0; i < k; i++) loc += x[i]! * muN[i]!;
    const solved = cholSolve(l, x);
    let h = 0; // leverage x^T lam_n^{-1} x
    for (let i = 0; i < k; i++) h += x[i]! * solved[i]!;
    const scale = Math.sqrt((bN / aN) * (1 + h));
    const lp = studentTLogPdf(z(row, nParents), df, loc, scale) - logYStd;
    perRow.push(lp);
    total += lp;
  }
  if (!Number.isFinite(total)) {
    throw new Error("non-finite predictive log density");
  }
  return { total, perRow };
}
