// One cellphone pane: identity picker, USSD screen, keypad, SMS inbox.
// The screen always shows the gateway's reply text byte for byte; incoming
// SMS appear via a 2-second poll and are acked once they have been rendered.

import { ApiError, Cast, GatewayClient, SmsMessage, newSessionId } from "./api";

const KEYPAD = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "*", "0", "#"];

export class PhonePane {
  msisdn: string;
  sessionId: string | null = null;
  screenText = "";
  inbox: SmsMessage[] = [];

  private screenEl!: HTMLPreElement;
  private inputEl!: HTMLInputElement;
  private bannerEl!: HTMLDivElement;
  private inboxEl!: HTMLUListElement;
  private sessionBadgeEl!: HTMLSpanElement;
  private lastAcked = 0;

  constructor(
    private root: HTMLElement,
    private client: GatewayClient,
    private cast: Cast,
    initialMsisdn: string,
    private label: string,
  ) {
    this.msisdn = initialMsisdn;
    this.render();
  }

  private render(): void {
    this.root.classList.add("phone");
    this.root.innerHTML = "";

    const head = el("div", "phone-head");
    const title = el("strong");
    title.textContent = this.label;
    const picker = document.createElement("select");
    picker.className = "identity";
    for (const member of this.cast.msisdns) {
      const option = document.createElement("option");
      option.value = member.msisdn;
      const who = this.cast.subscribers[member.msisdn]?.full_name;
      option.textContent = who ? `${member.msisdn} (${who})` : member.msisdn;
      if (member.msisdn === this.msisdn) option.selected = true;
      picker.appendChild(option);
    }
    picker.addEventListener("change", () => this.setIdentity(picker.value));
    this.sessionBadgeEl = el("span", "session-badge");
    head.append(title, picker, this.sessionBadgeEl);

    this.bannerEl = el("div", "banner hidden");
    this.screenEl = document.createElement("pre");
    this.screenEl.className = "screen";
    this.screenEl.textContent = `Dial ${this.cast.service_code} to begin`;

    this.inputEl = document.createElement("input");
    this.inputEl.className = "input-line";
    this.inputEl.placeholder = "input";
    this.inputEl.addEventListener("keydown", (event) => {
      if (event.key === "Enter") void this.submitInput();
    });

    const keypad = el("div", "keypad");
    for (const key of KEYPAD) {
      const button = document.createElement("button");
      button.textContent = key;
      button.addEventListener("click", () => this.pressKey(key));
      keypad.appendChild(button);
    }

    const actions = el("div", "actions");
    const dialButton = document.createElement("button");
    dialButton.className = "dial";
    dialButton.textContent = `Dial ${this.cast.service_code}`;
    dialButton.addEventListener("click", () => void this.dial());
    const sendButton = document.createElement("button");
    sendButton.className = "send";
    sendButton.textContent = "Send";
    sendButton.addEventListener("click", () => void this.submitInput());
    const clearButton = document.createElement("button");
    clearButton.className = "clear";
    clearButton.textContent = "Clear";
    clearButton.addEventListener("click", () => {
      this.inputEl.value = "";
    });
    actions.append(dialButton, sendButton, clearButton);

    const inboxBox = el("div", "inbox");
    const inboxTitle = el("h4");
    inboxTitle.textContent = "SMS inbox";
    this.inboxEl = document.createElement("ul");
    inboxBox.append(inboxTitle, this.inboxEl);

    this.root.append(head, this.bannerEl, this.screenEl, this.inputEl, keypad, actions, inboxBox);
    this.updateSessionBadge();
  }

  setIdentity(msisdn: string): void {
    this.msisdn = msisdn;
    this.sessionId = null;
    this.inbox = [];
    this.lastAcked = 0;
    this.screenText = "";
    this.screenEl.textContent = `Dial ${this.cast.service_code} to begin`;
    this.inboxEl.innerHTML = "";
    this.hideBanner();
    this.updateSessionBadge();
  }

  pressKey(key: string): void {
    this.inputEl.value += key;
  }

  async dial(): Promise<void> {
    this.hideBanner();
    const sessionId = newSessionId();
    try {
      const reply = await this.client.ussd(sessionId, this.msisdn, this.cast.service_code);
      this.sessionId = reply.end_session ? null : sessionId;
      this.showScreen(reply.text);
    } catch (error) {
      this.sessionId = null;
      this.showError(error);
    }
    this.updateSessionBadge();
  }

  async submitInput(): Promise<void> {
    const text = this.inputEl.value;
    this.inputEl.value = "";
    if (!this.sessionId) {
      this.showBanner(`No active session. Dial ${this.cast.service_code} first.`);
      return;
    }
    this.hideBanner();
    try {
      const reply = await this.client.ussd(this.sessionId, this.msisdn, text);
      if (reply.end_session) this.sessionId = null;
      this.showScreen(reply.text);
    } catch (error) {
      if (error instanceof ApiError && error.code === "SESSION_EXPIRED") {
        this.sessionId = null;
      }
      this.showError(error);
    }
    this.updateSessionBadge();
    // money screens usually queue SMS receipts; refresh without waiting for
    // the next poll tick
    await this.pollInbox();
  }

  async pollInbox(): Promise<void> {
    let messages: SmsMessage[];
    try {
      messages = (await this.client.outbox(this.msisdn)).messages;
    } catch {
      return; // transient poll failures stay silent; the next tick retries
    }
    this.inbox = messages;
    this.inboxEl.innerHTML = "";
    for (const message of [...messages].reverse()) {
      const item = document.createElement("li");
      item.textContent = message.body;
      item.title = message.queued_at;
      this.inboxEl.appendChild(item);
    }
    const newest = messages[messages.length - 1];
    if (newest && newest.id > this.lastAcked) {
      this.lastAcked = newest.id;
      try {
        await this.client.ackSms(this.msisdn, newest.id); // viewed == delivered
      } catch {
        // delivery marking is cosmetic; never disturb the operator for it
      }
    }
  }

  private showScreen(text: string): void {
    this.screenText = text;
    this.screenEl.textContent = text;
  }

  private showError(error: unknown): void {
    if (error instanceof ApiError) {
      this.showBanner(`${error.code}: ${error.message}`);
    } else {
      this.showBanner(`network error: ${String(error)}`);
    }
  }

  private showBanner(text: string): void {
    this.bannerEl.textContent = text;
    this.bannerEl.classList.remove("hidden");
  }

  private hideBanner(): void {
    this.bannerEl.classList.add("hidden");
  }

  private updateSessionBadge(): void {
    this.sessionBadgeEl.textContent = this.sessionId ? "in session" : "idle";
    this.sessionBadgeEl.classList.toggle("live", this.sessionId !== null);
  }
}

function el<K extends keyof HTMLElementTagNameMap>(tag: K, className = ""): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  return node;
}
