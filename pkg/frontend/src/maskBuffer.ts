/**
 * Binary blur-mask edit buffer: value 0 marks a blurred pixel, 1 a sharp
 * one. Painting is strictly binary to match the dataset contract, with
 * stroke-level undo history.
 */

export const BLUR = 0;
export const SHARP = 1;

const UNDO_LIMIT = 32;

export class MaskBuffer {
  readonly width: number;
  readonly height: number;
  private data: Uint8Array;
  private original: Uint8Array;
  private undoStack: Uint8Array[] = [];
  private strokeOpen = false;

  constructor(width: number, height: number, data?: Uint8Array) {
    this.width = width;
    this.height = height;
    if (data) {
      if (data.length !== width * height) {
        throw new Error(`buffer length ${data.length} does not match ${width}x${height}`);
      }
      if (!MaskBuffer.isBinary(data)) {
        throw new Error("mask buffer must contain only 0 and 1");
      }
      this.data = Uint8Array.from(data);
    } else {
      this.data = new Uint8Array(width * height).fill(SHARP);
    }
    this.original = Uint8Array.from(this.data);
  }

  static isBinary(data: Uint8Array): boolean {
    for (let i = 0; i < data.length; i++) {
      if (data[i] !== 0 && data[i] !== 1) return false;
    }
    return true;
  }

  static fromGrayPixels(pixels: Uint8Array, width: number, height: number): MaskBuffer {
    const binary = new Uint8Array(pixels.length);
    for (let i = 0; i < pixels.length; i++) {
      const v = pixels[i];
      if (v !== 0 && v !== 255) throw new Error(`mask pixel ${v} is not binary`);
      binary[i] = v === 0 ? BLUR : SHARP;
    }
    return new MaskBuffer(width, height, binary);
  }

  toGrayPixels(): Uint8Array {
    const out = new Uint8Array(this.data.length);
    for (let i = 0; i < this.data.length; i++) {
      out[i] = this.data[i] === BLUR ? 0 : 255;
    }
    return out;
  }

  get(x: number, y: number): number {
    return this.data[y * this.width + x];
  }

  values(): Uint8Array {
    return this.data;
  }

  get dirty(): boolean {
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== this.original[i]) return true;
    }
    return false;
  }

  blurFraction(): number {
    let zeros = 0;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] === BLUR) zeros++;
    }
    return zeros / this.data.length;
  }

  /** Snapshot once per stroke; pointer-down opens, pointer-up closes. */
  beginStroke(): void {
    if (this.strokeOpen) return;
    this.undoStack.push(Uint8Array.from(this.data));
    if (this.undoStack.length > UNDO_LIMIT) this.undoStack.shift();
    this.strokeOpen = true;
  }

  endStroke(): void {
    this.strokeOpen = false;
  }

  undoDepth(): number {
    return this.undoStack.length;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.data = prev;
    this.strokeOpen = false;
    return true;
  }

  paint(cx: number, cy: number, radius: number, value: 0 | 1): void {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  /** 4-connected fill of the clicked pixel's uniform region. */
  floodFill(x: number, y: number, value: 0 | 1): void {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const target = this.get(x, y);
    if (target === value) return;
    const stack = [y * this.width + x];
    while (stack.length) {
      const idx = stack.pop()!;
      if (this.data[idx] !== target) continue;
      this.data[idx] = value;
      const px = idx % this.width;
      if (px > 0) stack.push(idx - 1);
      if (px < this.width - 1) stack.push(idx + 1);
      if (idx >= this.width) stack.push(idx - this.width);
      if (idx < this.data.length - this.width) stack.push(idx + this.width);
    }
  }

  /** Adopt server state after a successful save or re-estimate. */
  markSaved(): void {
    this.original = Uint8Array.from(this.data);
    this.undoStack = [];
    this.strokeOpen = false;
  }

  equals(other: Uint8Array): boolean {
    if (other.length !== this.data.length) return false;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== other[i]) return false;
    }
    return true;
  }
}
