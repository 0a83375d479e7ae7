// Seller point of sale: the buyer's cellphone number goes in first, then the
// seller keys the amount and the buyer's temporary code to verify the sale.
// Without a code the charge is taken from the buyer's wallet.

import { ApiError, Cast, GatewayClient, TransactionView } from "./api";
import { formatResponseAmount, majorToMinor } from "./money";

export class PosPane {
  lastTxn: TransactionView | null = null;

  private sellerEl!: HTMLSelectElement;
  private buyerEl!: HTMLInputElement;
  private amountEl!: HTMLInputElement;
  private codeEl!: HTMLInputElement;
  private receiptEl!: HTMLPreElement;
  private bannerEl!: HTMLDivElement;

  constructor(
    private root: HTMLElement,
    private client: GatewayClient,
    private cast: Cast,
  ) {
    this.render();
  }

  private render(): void {
    this.root.classList.add("pos");
    this.root.innerHTML = "";
    const title = document.createElement("h3");
    title.textContent = "Seller POS";

    this.sellerEl = document.createElement("select");
    for (const [msisdn, who] of Object.entries(this.cast.subscribers)) {
      const option = document.createElement("option");
      option.value = msisdn;
      option.textContent = who.full_name ? `${msisdn} (${who.full_name})` : msisdn;
      this.sellerEl.appendChild(option);
    }

    this.buyerEl = input("buyer cellphone number");
    this.amountEl = input("amount");
    this.codeEl = input("buyer code (blank = wallet)");
    this.codeEl.type = "password";
    this.codeEl.autocomplete = "off";

    this.bannerEl = document.createElement("div");
    this.bannerEl.className = "banner hidden";

    const button = document.createElement("button");
    button.className = "charge";
    button.textContent = "Charge";
    button.addEventListener("click", () => void this.charge());

    this.receiptEl = document.createElement("pre");
    this.receiptEl.className = "receipt";

    this.root.append(
      title,
      this.sellerEl,
      this.buyerEl,
      this.amountEl,
      this.codeEl,
      button,
      this.bannerEl,
      this.receiptEl,
    );
  }

  async charge(): Promise<void> {
    this.bannerEl.classList.add("hidden");
    let amountMinor: number;
    try {
      amountMinor = majorToMinor(this.amountEl.value);
    } catch {
      this.showBanner("AMOUNT_INVALID: enter an amount like 300 or 300.50");
      return;
    }
    try {
      const txn = await this.client.posCharge(
        this.sellerEl.value,
        this.buyerEl.value.trim(),
        amountMinor,
        this.codeEl.value.trim() || undefined,
      );
      this.lastTxn = txn;
      this.codeEl.value = "";
      this.receiptEl.textContent = [
        `Charged ${formatResponseAmount(txn.amount_minor, txn.currency)} (${txn.source})`,
        `Buyer ${txn.sender} -> seller ${txn.recipient}`,
        `State: ${txn.state}`,
        `Receipt: ${txn.txn_id}`,
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
