import { ServiceClient } from "./api.js";
import { EventStream } from "./events.js";
import { initialState, reduce, type ConsoleState } from "./state.js";
import { renderView } from "./render.js";

/** The console is served by the operator service itself, so the API lives at
 * the same origin (the SPA sits under /ui). */
const client = new ServiceClient(window.location.origin);

const app = document.getElementById("app") as HTMLElement;
const picker = document.getElementById("picker") as HTMLElement;

let state: ConsoleState | null = null;
let stream: EventStream | null = null;

function redraw(): void {
  if (state) app.innerHTML = renderView(state);
}

function toast(message: string): void {
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  document.body.appendChild(el);
  setTimeout(() => el.remove(), 4000);
}

async function attach(campaignId: string): Promise<void> {
  stream?.stop();
  state = initialState(campaignId);
  redraw();
  stream = new EventStream(window.location.origin, campaignId, {
    onEvent: (event) => {
      if (state) {
        state = reduce(state, event);
        redraw();
      }
    },
    onStatus: (status, detail) => {
      if (state) {
        state = { ...state, connection: status };
        redraw();
      }
      if (status === "error" && detail) toast(detail);
    },
  });
  window.location.hash = campaignId;
  void stream.start();
}

async function refreshPicker(): Promise<void> {
  const campaigns = await client.listCampaigns();
  const options = campaigns
    .map(
      (c) =>
        `<option value="${c.campaign_id}">${c.campaign_id} — ${c.mode}` +
        `${c.running ? " (running)" : ` (${c.stop_reason ?? "?"})`}</option>`,
    )
    .join("");
  const select = picker.querySelector("select");
  if (select) select.innerHTML = options;
}

async function submitDecision(
  verdict: "approve" | "deny" | "edit" | "take_over",
  stepIndex: number,
  extra: { replacement_commands?: string[]; manual_command?: string } = {},
): Promise<void> {
  if (!state) return;
  const result = await client.submitDecision(state.campaignId, {
    step_index: stepIndex,
    verdict,
    ...extra,
  });
  if (result.status === 409) {
    // stale decision: the step was already decided elsewhere
    toast(result.detail);
    redraw();
  } else if (!result.ok) {
    const feedback = app.querySelector(".edit-feedback");
    if (feedback) feedback.textContent = result.detail;
    else toast(result.detail);
  }
}

app.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const decision = target.dataset["decision"];
  if (!decision) return;
  const stepIndex = Number(target.dataset["step"]);
  if (decision === "approve" || decision === "deny") {
    void submitDecision(decision, stepIndex);
  } else if (decision === "edit" || decision === "take_over") {
    const editor = app.querySelector<HTMLElement>(".editor");
    if (editor) editor.hidden = false;
  } else if (decision === "submit-edit") {
    const textarea = app.querySelector<HTMLTextAreaElement>(".edit-commands");
    const manual = app.querySelector<HTMLInputElement>(".manual-command");
    const manualCommand = manual?.value.trim() ?? "";
    if (manualCommand) {
      void submitDecision("take_over", stepIndex, { manual_command: manualCommand });
      return;
    }
    const commands = (textarea?.value ?? "")
      .split("\n")
      .map((line) => line.trim())
      .filter(Boolean);
    void submitDecision("edit", stepIndex, { replacement_commands: commands });
  }
});

picker.addEventListener("submit", (event) => {
  event.preventDefault();
  const form = event.target as HTMLFormElement;
  const action = (event.submitter as HTMLButtonElement | null)?.value;
  if (action === "create") {
    const data = new FormData(form);
    void client
      .createCampaign({
        scenario: String(data.get("scenario") || "single-vsftpd-2.3.4"),
        script: String(data.get("script") || "demo"),
        seed: Number(data.get("seed") || 0),
        mode: (String(data.get("mode") || "assisted")) as
          | "autonomous"
          | "assisted"
          | "observer",
      })
      .then((created) => attach(created.campaign_id))
      .then(refreshPicker)
      .catch((err) => toast(String(err)));
  } else {
    const select = form.querySelector("select");
    if (select?.value) void attach(select.value);
  }
});

void refreshPicker();
if (window.location.hash.length > 1) {
  void attach(window.location.hash.slice(1));
}
