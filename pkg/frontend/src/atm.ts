// ATM pane: the holder keys their cellphone number, the secret access code
// (masked) and the amount to dispense.

import { ApiError, AtmReceipt, GatewayClient } from "./api";
import { formatResponseAmount, majorToMinor } from "./money";

export class AtmPane {
  lastReceipt: AtmReceipt | null = null;

  private msisdnEl!: HTMLInputElement;
  private codeEl!: HTMLInputElement;
  private amountEl!: HTMLInputElement;
  private receiptEl!: HTMLPreElement;
  private bannerEl!: HTMLDivElement;

  constructor(
    private root: HTMLElement,
    private client: GatewayClient,
  ) {
    this.render();
  }

  private render(): void {
    this.root.classList.add("atm");
    this.root.innerHTML = "";
    const title = document.createElement("h3");
    title.textContent = "ATM";

    this.msisdnEl = input("cellphone number");
    this.codeEl = input("access code");
    this.codeEl.type = "password"; // the code is a secret: never shown unmasked
    this.codeEl.autocomplete = "off";
    this.amountEl = input("amount");

    this.bannerEl = document.createElement("div");
    this.bannerEl.className = "banner hidden";

    const button = document.createElement("button");
    button.className = "redeem";
    button.textContent = "Withdraw cash";
    button.addEventListener("click", () => void this.redeem());

    this.receiptEl = document.createElement("pre");
    this.receiptEl.className = "receipt";

    this.root.append(title, this.msisdnEl, this.codeEl, this.amountEl, button, this.bannerEl, this.receiptEl);
  }

  async redeem(): Promise<void> {
    this.bannerEl.classList.add("hidden");
    let amountMinor: number;
    try {
      amountMinor = majorToMinor(this.amountEl.value);
    } catch {
      this.showBanner("AMOUNT_INVALID: enter an amount like 275 or 275.50");
      return;
    }
    try {
      const receipt = await this.client.atmRedeem(
        this.codeEl.value.trim(),
        this.msisdnEl.value.trim(),
        amountMinor,
      );
      this.lastReceipt = receipt;
      this.codeEl.value = "";
      this.receiptEl.textContent = [
        `Dispensed ${formatResponseAmount(receipt.redeemed_minor, receipt.currency)}`,
        `Remaining ${formatResponseAmount(receipt.remaining_minor, receipt.currency)}`,
        `Code state: ${receipt.state}`,
        `Receipt: ${receipt.txn_id}`,
      ].join("\n");
    } catch (error) {
      if (error instanceof ApiError) {
        this.showBanner(`${error.code}: ${error.message}`);
      } else {
        this.showBanner(`network error: ${String(error)}`);
      }
    }
  }

  private showBanner(text: string): void {
    this.bannerEl.textContent = text;
    this.bannerEl.classList.remove("hidden");
  }
}

function input(placeholder: string): HTMLInputElement {
  const node = document.createElement("input");
  node.placeholder = placeholder;
  return node;
}
