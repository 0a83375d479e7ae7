// Typed client for the wallet gateway. Every pane talks to the service
// through this module and nothing else; the UI never derives balances or
// fees itself, it only displays what the gateway returns.

export interface UssdReply {
  text: string;
  end_session: boolean;
}

export interface SmsMessage {
  id: number;
  to: string;
  body: string;
  queued_at: string;
  delivery_state: "QUEUED" | "DELIVERED";
}

export interface AtmReceipt {
  txn_id: string;
  code_id: string;
  holder: string;
  redeemed_minor: number;
  remaining_minor: number;
  currency: string;
  state: string;
  entry_seq: number;
}

export interface TransactionView {
  txn_id: string;
  kind: string;
  state: string;
  sender: string;
  recipient: string;
  amount_minor: number;
  fee_minor: number;
  currency: string;
  source: string;
  entry_seq: number;
  access_code_issued: boolean;
}

export interface BalanceView {
  msisdn: string;
  amount_minor: number;
  currency: string;
  rendered: string;
}

export interface CastMember {
  msisdn: string;
  carrier: string;
}

export interface Cast {
  msisdns: CastMember[];
  bank_accounts: { number: string; holder: string }[];
  subscribers: Record<string, { full_name: string; status: string }>;
  service_code: string;
}

export interface LoginView {
  token: string;
  msisdn: string;
  must_change_password: boolean;
  expires_at: string;
}

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class GatewayClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown, headers?: Record<string, string>): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { "Content-Type": "application/json", ...headers },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      const err = payload?.error ?? { code: "INTERNAL", message: "Unexpected gateway failure" };
      throw new ApiError(err.code, err.message, response.status);
    }
    return payload as T;
  }

  ussd(sessionId: string, msisdn: string, input: string): Promise<UssdReply> {
    return this.request("POST", "/ussd", { session_id: sessionId, msisdn, input });
  }

  outbox(msisdn: string): Promise<{ messages: SmsMessage[] }> {
    return this.request("GET", `/sms/outbox/${msisdn}`);
  }

  ackSms(msisdn: string, throughId: number): Promise<{ acked: number }> {
    return this.request("POST", "/sms/ack", { msisdn, through_id: throughId });
  }

  atmRedeem(code: string, msisdn: string, amountMinor: number): Promise<AtmReceipt> {
    return this.request("POST", "/atm/redeem", {
      code,
      msisdn,
      amount_minor: amountMinor,
    });
  }

  posCharge(
    sellerMsisdn: string,
    buyerMsisdn: string,
    amountMinor: number,
    code?: string,
  ): Promise<TransactionView> {
    return this.request("POST", "/pos/charge", {
      seller_msisdn: sellerMsisdn,
      buyer_msisdn: buyerMsisdn,
      amount_minor: amountMinor,
      code: code || null,
    });
  }

  cast(): Promise<Cast> {
    return this.request("GET", "/admin/cast");
  }

  register(application: {
    msisdn: string;
    full_name: string;
    pin: string;
    secret_question: string;
    secret_answer: string;
    bank_account?: string | null;
  }): Promise<{ msisdn: string; login_id: string; status: string }> {
    return this.request("POST", "/register", application);
  }

  login(principal: string, secret: string): Promise<LoginView> {
    return this.request("POST", "/login", { principal, secret, channel: "WEB" });
  }

  changePassword(token: string, newPassword: string): Promise<{ changed: boolean }> {
    return this.request(
      "POST",
      "/password/change",
      { new_password: newPassword },
      { Authorization: `Bearer ${token}` },
    );
  }

  balance(token: string, msisdn: string): Promise<BalanceView> {
    return this.request("GET", `/wallets/${msisdn}/balance`, undefined, {
      Authorization: `Bearer ${token}`,
    });
  }

  transferWallet(
    token: string,
    recipientMsisdn: string,
    amountMinor: number,
    source: "AUTO" | "WALLET" | "BANK" = "AUTO",
  ): Promise<TransactionView> {
    return this.request(
      "POST",
      "/transfers/wallet",
      { recipient_msisdn: recipientMsisdn, amount_minor: amountMinor, source },
      { Authorization: `Bearer ${token}` },
    );
  }
}

export function newSessionId(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return `ui-${crypto.randomUUID()}`;
  }
  return `ui-${Date.now()}-${Math.floor(Math.random() * 1e9)}`;
}
