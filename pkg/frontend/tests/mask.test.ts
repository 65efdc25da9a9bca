import { describe, expect, it } from "vitest";

import { MaskEditor } from "../src/mask.js";

describe("MaskEditor", () => {
  it("paints a filled disc", () => {
    const editor = new MaskEditor(64, 64);
    editor.brushRadius = 5;
    editor.paint(32, 32);
    expect(editor.mask[32 * 64 + 32]).toBe(1);
    expect(editor.mask[32 * 64 + 36]).toBe(1);
    expect(editor.mask[32 * 64 + 40]).toBe(0); // outside the radius
    expect(editor.selectedCount).toBeGreaterThan(60);
  });

  it("erases with the same brush", () => {
    const editor = new MaskEditor(32, 32);
    editor.brushRadius = 6;
    editor.paint(16, 16);
    editor.paint(16, 16, true);
    expect(editor.selectedCount).toBe(0);
  });

  it("paintLine leaves no gaps on fast strokes", () => {
    const editor = new MaskEditor(128, 32);
    editor.brushRadius = 4;
    editor.paintLine(10, 16, 110, 16);
    for (let u = 10; u <= 110; u++) {
      expect(editor.mask[16 * 128 + u]).toBe(1);
    }
  });

  it("undo restores the previous stroke state", () => {
    const editor = new MaskEditor(32, 32);
    editor.beginStroke();
    editor.paint(10, 10);
    const afterFirst = editor.selectedCount;
    editor.beginStroke();
    editor.paint(22, 22);
    expect(editor.selectedCount).toBeGreaterThan(afterFirst);
    expect(editor.undo()).toBe(true);
    expect(editor.selectedCount).toBe(afterFirst);
  });

  it("clamps painting at the borders", () => {
    const editor = new MaskEditor(16, 16);
    editor.brushRadius = 10;
    editor.paint(0, 0);
    expect(editor.mask[0]).toBe(1);
    expect(editor.selectedCount).toBeLessThan(16 * 16);
  });
});
