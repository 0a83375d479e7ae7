// Conversion at the API boundary only: operators type major units ("550" or
// "550.50"), the wire carries integer minor units. Displayed amounts always
// come back out of gateway responses.

export function majorToMinor(text: string): number {
  const raw = text.trim().replace(/^R/, "");
  const match = /^(\d+)(?:\.(\d{1,2}))?$/.exec(raw);
  if (!match) {
    throw new Error(`Not an amount: ${text}`);
  }
  const cents = (match[2] ?? "").padEnd(2, "0");
  return parseInt(match[1], 10) * 100 + (cents ? parseInt(cents, 10) : 0);
}

const SYMBOLS: Record<string, string> = { ZAR: "R", CDF: "FC", USD: "$" };

export function formatResponseAmount(amountMinor: number, currency: string): string {
  const symbol = SYMBOLS[currency] ?? `${currency} `;
  const sign = amountMinor < 0 ? "-" : "";
  const abs = Math.abs(amountMinor);
  const major = Math.floor(abs / 100);
  const cents = abs % 100;
  return cents === 0
    ? `${sign}${symbol}${major}`
    : `${sign}${symbol}${major}.${String(cents).padStart(2, "0")}`;
}
