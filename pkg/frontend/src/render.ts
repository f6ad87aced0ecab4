import type { ConsoleState, PendingCard, StepCard } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function commandList(commands: string[]): string {
  const items = commands
    .map((c) => `<li><code>${escapeHtml(c)}</code></li>`)
    .join("");
  return `<ol class="commands">${items}</ol>`;
}

function collapsed(label: string, body: string): string {
  return (
    `<details><summary>${escapeHtml(label)}</summary>` +
    `<pre>${escapeHtml(body)}</pre></details>`
  );
}

export function renderStepCard(card: StepCard): string {
  const verdict = card.verdict
    ? `<span class="verdict verdict-${card.verdict.toLowerCase()}">${card.verdict}</span>`
    : "";
  const parts = [
    `<header>step ${card.index} <span class="tactic">[${escapeHtml(card.tactic)}]</span> ${verdict}</header>`,
  ];
  if (card.promptExcerpt) parts.push(collapsed("prompt", card.promptExcerpt));
  if (card.commands.length) parts.push(commandList(card.commands));
  if (card.outputExcerpt) parts.push(collapsed("output", card.outputExcerpt));
  for (const ev of card.sessionEvents) {
    parts.push(`<p class="session-event">${escapeHtml(ev)}</p>`);
  }
  if (card.summary) parts.push(`<p class="summary">${escapeHtml(card.summary)}</p>`);
  if (card.nextTactic) {
    parts.push(`<p class="next-tactic">next: ${escapeHtml(card.nextTactic)}</p>`);
  }
  return `<article class="step-card${card.complete ? " complete" : ""}" data-step="${card.index}">${parts.join("")}</article>`;
}

export function renderPendingCard(pending: PendingCard): string {
  const decided = pending.decidedVerdict
    ? `<p class="decided">decided: ${escapeHtml(pending.decidedVerdict)}</p>`
    : `<div class="approval-buttons">
        <button data-decision="approve" data-step="${pending.stepIndex}">Approve</button>
        <button data-decision="deny" data-step="${pending.stepIndex}">Deny</button>
        <button data-decision="edit" data-step="${pending.stepIndex}">Edit</button>
        <button data-decision="take_over" data-step="${pending.stepIndex}">Take over</button>
      </div>
      <div class="editor" hidden>
        <textarea class="edit-commands" rows="4"></textarea>
        <input class="manual-command" placeholder="single command to run yourself" />
        <button data-decision="submit-edit" data-step="${pending.stepIndex}">Submit</button>
        <p class="edit-feedback" role="alert"></p>
      </div>`;
  return (
    `<aside class="pending-card" data-step="${pending.stepIndex}">` +
    `<header>awaiting approval — step ${pending.stepIndex}</header>` +
    commandList(pending.commands) +
    (pending.stopRequested ? `<p class="stop-flag">model asked to stop</p>` : "") +
    decided +
    `</aside>`
  );
}

export function renderView(state: ConsoleState): string {
  const parts: string[] = [
    `<section class="status">` +
      `<span class="campaign-id">${escapeHtml(state.campaignId)}</span>` +
      `<span class="connection connection-${state.connection}">${state.connection}</span>` +
      (state.currentTactic
        ? `<span class="current-tactic">tactic: ${escapeHtml(state.currentTactic)}</span>`
        : "") +
      (state.currentStage
        ? `<span class="current-stage">stage: ${escapeHtml(state.currentStage)}</span>`
        : "") +
      `</section>`,
  ];
  if (state.stopReason) {
    parts.push(
      `<div class="banner stop-banner">campaign stopped: ${escapeHtml(state.stopReason)}</div>`,
    );
  }
  for (const error of state.errors) {
    parts.push(`<div class="banner error-banner">${escapeHtml(error)}</div>`);
  }
  parts.push(
    `<section class="steps">${state.steps.map(renderStepCard).join("")}</section>`,
  );
  if (state.pending) parts.push(renderPendingCard(state.pending));
  return parts.join("\n");
}
