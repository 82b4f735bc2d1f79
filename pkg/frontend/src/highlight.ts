// Tiny SQL keyword highlighter producing safe HTML.

const KEYWORDS = new Set([
  "select", "from", "where", "join", "inner", "left", "right", "outer", "on",
  "group", "by", "order", "having", "limit", "offset", "distinct", "as", "and",
  "or", "not", "in", "like", "between", "union", "all", "case", "when", "then",
  "else", "end", "count", "sum", "avg", "min", "max", "asc", "desc", "null",
  "is", "exists", "cast",
]);

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function highlightSql(sql: string): string {
  const tokens = sql.split(/('(?:[^']|'')*'|\s+|[(),;])/g).filter((t) => t !== "");
  return tokens
    .map((token) => {
      if (token.startsWith("'")) return `<span class="sql-str">${escapeHtml(token)}</span>`;
      if (KEYWORDS.has(token.toLowerCase())) return `<span class="sql-kw">${escapeHtml(token)}</span>`;
      if (/^\d+(\.\d+)?$/.test(token)) return `<span class="sql-num">${escapeHtml(token)}</span>`;
      return escapeHtml(token);
    })
    .join("");
}
