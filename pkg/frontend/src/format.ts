// Number rendering at 6 significant digits, matching the CLI's printf-%g
// style: fixed notation while the exponent is in [-4, 5], otherwise
// scientific with a sign and two exponent digits; trailing zeros dropped.

export function g6(x: number): string {
  if (!Number.isFinite(x)) return String(x);
  if (x === 0) return "0";
  const [mantissa, expPart] = x.toExponential(5).split("e");
  const exponent = parseInt(expPart, 10);
  if (exponent < -4 || exponent >= 6) {
    const m = stripTrailingZeros(mantissa);
    const sign = exponent < 0 ? "-" : "+";
    const abs = Math.abs(exponent);
    return `${m}e${sign}${abs < 10 ? "0" + abs : String(abs)}`;
  }
  // Within fixed range: round to 6 significant digits, then let the
  // shortest round-trip rendering drop the trailing zeros.
  return Number(x.toPrecision(6)).toString();
}

function stripTrailingZeros(mantissa: string): string {
  if (!mantissa.includes(".")) return mantissa;
  return mantissa.replace(/0+$/, "").replace(/\.$/, "");
}

export function percent(p: number): string {
  return `${Math.round(p * 100)}%`;
}
