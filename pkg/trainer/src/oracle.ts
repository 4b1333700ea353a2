/**
 * Exact integer reference forward pass over an exported model document.
 *
 * Mirrors the inference engine's semantics: integer weights, zero padding,
 * window-sum pooling, square activation, row-major (h, w, c) flattening.
 * Arithmetic runs in doubles with an exactness guard (every value must stay
 * below 2^52, where double addition of integers is exact); documents whose
 * certified ranges exceed that use the BigInt path.
 */

export interface ModelDoc {
  format: string;
  version: number;
  architecture: string;
  bit_width: number;
  input_scale: number;
  layers: LayerDoc[];
}

export interface LayerDoc {
  kind: "conv" | "square" | "pool" | "fc";
  name: string;
  filters?: number;
  outputs?: number;
  kernel?: [number, number];
  stride?: [number, number];
  padding?: boolean;
  groups?: number;
  extent?: number;
  weight_scale?: number;
  weights?: number[];
}

const EXACT_LIMIT = 2 ** 52;

class Guard {
  peak = 0;
  check(v: number): number {
    const a = Math.abs(v);
    if (a > this.peak) this.peak = a;
    if (a >= EXACT_LIMIT) {
      throw new Error(
        "value exceeded the exact double range; use the BigInt oracle"
      );
    }
    return v;
  }
}

export interface Tensor3 {
  h: number;
  w: number;
  c: number;
  data: Float64Array; // exact integers
}

export function integerizeImage(
  pixels255: ArrayLike<number>,
  h: number,
  w: number,
  c: number,
  scale: number
): Tensor3 {
  const data = new Float64Array(h * w * c);
  for (let i = 0; i < data.length; i++) {
    data[i] = Math.round((pixels255[i] / 255) * scale);
  }
  return { h, w, c, data };
}

function convLayer(x: Tensor3, layer: LayerDoc, guard: Guard): Tensor3 {
  const [kh, kw] = layer.kernel!;
  const [sh, sw] = layer.stride!;
  const groups = layer.groups ?? 1;
  const filters = layer.filters!;
  const cg = x.c / groups;
  const perGroup = filters / groups;
  const ph = layer.padding ? (kh - 1) >> 1 : 0;
  const pw = layer.padding ? (kw - 1) >> 1 : 0;
  const oh = Math.floor((x.h + 2 * ph - kh) / sh) + 1;
  const ow = Math.floor((x.w + 2 * pw - kw) / sw) + 1;
  const weights = layer.weights!;
  const out = new Float64Array(oh * ow * filters);
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      for (let f = 0; f < filters; f++) {
        const g = Math.floor(f / perGroup);
        let acc = 0;
        for (let ky = 0; ky < kh; ky++) {
          const iy = oy * sh + ky - ph;
          if (iy < 0 || iy >= x.h) continue;
          for (let kx = 0; kx < kw; kx++) {
            const ix = ox * sw + kx - pw;
            if (ix < 0 || ix >= x.w) continue;
            for (let ci = 0; ci < cg; ci++) {
              const wv = weights[((f * kh + ky) * kw + kx) * cg + ci];
              const xv = x.data[(iy * x.w + ix) * x.c + g * cg + ci];
              acc = guard.check(acc + wv * xv);
            }
          }
        }
        out[(oy * ow + ox) * filters + f] = acc;
      }
    }
  }
  return { h: oh, w: ow, c: filters, data: out };
}

function fcLayer(x: Tensor3, layer: LayerDoc, guard: Guard): Tensor3 {
  const outputs = layer.outputs!;
  const inCount = x.h * x.w * x.c;
  const weights = layer.weights!;
  const out = new Float64Array(outputs);
  for (let o = 0; o < outputs; o++) {
    let acc = 0;
    for (let i = 0; i < inCount; i++) {
      acc = guard.check(acc + weights[o * inCount + i] * x.data[i]);
    }
    out[o] = acc;
  }
  return { h: 1, w: 1, c: outputs, data: out };
}

function squareLayer(x: Tensor3, guard: Guard): Tensor3 {
  const out = new Float64Array(x.data.length);
  for (let i = 0; i < out.length; i++) out[i] = guard.check(x.data[i] * x.data[i]);
  return { ...x, data: out };
}

function poolLayer(x: Tensor3, layer: LayerDoc, guard: Guard): Tensor3 {
  const e = layer.extent!;
  const s = layer.stride![0];
  const oh = Math.floor((x.h - e) / s) + 1;
  const ow = Math.floor((x.w - e) / s) + 1;
  const out = new Float64Array(oh * ow * x.c);
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      for (let c = 0; c < x.c; c++) {
        let acc = 0;
        for (let dy = 0; dy < e; dy++) {
          for (let dx = 0; dx < e; dx++) {
            acc = guard.check(
              acc + x.data[((oy * s + dy) * x.w + (ox * s + dx)) * x.c + c]
            );
          }
        }
        out[(oy * ow + ox) * x.c + c] = acc;
      }
    }
  }
  return { h: oh, w: ow, c: x.c, data: out };
}

export function forward(doc: ModelDoc, image: Tensor3): Float64Array {
  const guard = new Guard();
  let x = image;
  for (const layer of doc.layers) {
    if (layer.kind === "conv") x = convLayer(x, layer, guard);
    else if (layer.kind === "fc") x = fcLayer(x, layer, guard);
    else if (layer.kind === "square") x = squareLayer(x, guard);
    else x = poolLayer(x, layer, guard);
  }
  return x.data;
}

export function classify(logits: ArrayLike<number>): number {
  let best = 0;
  for (let i = 1; i < logits.length; i++) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}
