import { describe, expect, it } from "vitest";

import { formatResponseAmount, majorToMinor } from "../src/money";

describe("majorToMinor", () => {
  it("parses whole and fractional amounts", () => {
    expect(majorToMinor("550")).toBe(55000);
    expect(majorToMinor("550.5")).toBe(55050);
    expect(majorToMinor("550.50")).toBe(55050);
    expect(majorToMinor("R275")).toBe(27500);
    expect(majorToMinor(" 0.05 ")).toBe(5);
  });

  it("rejects garbage", () => {
    for (const bad of ["", "abc", "5.555", "-5", "1,50"]) {
      expect(() => majorToMinor(bad)).toThrow();
    }
  });
});

describe("formatResponseAmount", () => {
  it("renders response numbers the way the gateway does", () => {
    expect(formatResponseAmount(55000, "ZAR")).toBe("R550");
    expect(formatResponseAmount(27550, "ZAR")).toBe("R275.50");
    expect(formatResponseAmount(5, "ZAR")).toBe("R0.05");
    expect(formatResponseAmount(-500, "ZAR")).toBe("-R5");
    expect(formatResponseAmount(100, "XTS")).toBe("XTS 1");
  });
});
